use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grid_shape, GridConfig};
use crate::error::{Error, Result};

/// Sensor pose in the global frame: planar pose plus mounting height.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensorPose {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarSweep {
    pub timestamp: f64,
    /// Returns in the sensor frame.
    pub points: Vec<[f32; 3]>,
    pub pose: SensorPose,
}

/// Binary occupancy tensor, bit-packed row-major with channels fastest, into
/// little-endian 64-bit words.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub config: GridConfig,
    rows: usize,
    cols: usize,
    channels: usize,
    words: Vec<u64>,
}

impl BevGrid {
    pub fn zeros(config: GridConfig) -> Result<Self> {
        let (rows, cols, channels) = grid_shape(&config)?;
        let bits = rows * cols * channels;
        Ok(Self {
            config,
            rows,
            cols,
            channels,
            words: vec![0; bits.div_ceil(64)],
        })
    }

    pub(crate) fn from_words(config: GridConfig, words: Vec<u64>) -> Result<Self> {
        let mut grid = Self::zeros(config)?;
        if words.len() != grid.words.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} occupancy words, got {}",
                grid.words.len(),
                words.len()
            )));
        }
        grid.words = words;
        Ok(grid)
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    fn bit_index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.cols + col) * self.channels + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> bool {
        assert!(row < self.rows && col < self.cols && channel < self.channels);
        let i = self.bit_index(row, col, channel);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize) {
        assert!(row < self.rows && col < self.cols && channel < self.channels);
        let i = self.bit_index(row, col, channel);
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    fn set_bit(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn popcount(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Channel of vertical slice `slice` from sweep `sweep` (0 = oldest).
    pub fn channel_of(&self, sweep: usize, slice: usize) -> usize {
        sweep * self.config.slices() + slice
    }

    /// True if any vertical slice of `sweep` is occupied at `(row, col)`.
    pub fn column_occupied(&self, row: usize, col: usize, sweep: usize) -> bool {
        let slices = self.config.slices();
        (0..slices).any(|s| self.get(row, col, sweep * slices + s))
    }
}

/// Precomputed sensor-to-grid transform for one sweep.
struct SweepTransform {
    cos: f64,
    sin: f64,
    tx: f64,
    ty: f64,
    tz: f64,
    channel_base: usize,
}

impl SweepTransform {
    fn new(pose: &SensorPose, current: &SensorPose, channel_base: usize) -> Self {
        let yaw = pose.yaw - current.yaw;
        let (sc, cc) = current.yaw.sin_cos();
        let dx = pose.x - current.x;
        let dy = pose.y - current.y;
        Self {
            cos: yaw.cos(),
            sin: yaw.sin(),
            tx: cc * dx + sc * dy,
            ty: -sc * dx + cc * dy,
            tz: pose.z - current.z,
            channel_base,
        }
    }
}

struct Binner {
    half_l: f64,
    half_w: f64,
    half_v: f64,
    dl: f64,
    dw: f64,
    dv: f64,
    rows: usize,
    cols: usize,
    slices: usize,
    channels: usize,
}

impl Binner {
    fn new(config: &GridConfig, shape: (usize, usize, usize)) -> Self {
        Self {
            half_l: 0.5 * config.length_m,
            half_w: 0.5 * config.width_m,
            half_v: 0.5 * config.height_m,
            dl: config.dl,
            dw: config.dw,
            dv: config.dv,
            rows: shape.0,
            cols: shape.1,
            slices: config.slices(),
            channels: shape.2,
        }
    }

    /// Bit index of a point, or `None` if it falls outside the volume.
    #[inline]
    fn bin(&self, t: &SweepTransform, p: &[f32; 3]) -> Option<usize> {
        let (px, py, pz) = (f64::from(p[0]), f64::from(p[1]), f64::from(p[2]));
        let x = t.cos * px - t.sin * py + t.tx;
        let y = t.sin * px + t.cos * py + t.ty;
        let z = pz + t.tz;
        if !(x >= -self.half_l && x < self.half_l)
            || !(y >= -self.half_w && y < self.half_w)
            || !(z >= -self.half_v && z < self.half_v)
        {
            return None;
        }
        let row = ((x + self.half_l) / self.dl) as usize;
        let col = ((y + self.half_w) / self.dw) as usize;
        let slice = ((z + self.half_v) / self.dv) as usize;
        if row >= self.rows || col >= self.cols || slice >= self.slices {
            return None;
        }
        Some((row * self.cols + col) * self.channels + t.channel_base + slice)
    }
}

/// Encodes `T` sweeps (oldest first, last = current) into the BEV frame of
/// `current_pose`. Points outside the grid extent or the height window
/// `[-V/2, V/2)` around the current sensor height are dropped.
pub fn rasterize_sweeps(
    sweeps: &[LidarSweep],
    current_pose: &SensorPose,
    config: &GridConfig,
) -> Result<BevGrid> {
    rasterize_sweeps_with_threads(sweeps, current_pose, config, 1)
}

/// As [`rasterize_sweeps`], binning points on `threads` workers. The result
/// is bit-identical for every thread count.
pub fn rasterize_sweeps_with_threads(
    sweeps: &[LidarSweep],
    current_pose: &SensorPose,
    config: &GridConfig,
    threads: usize,
) -> Result<BevGrid> {
    if sweeps.len() != config.num_sweeps {
        return Err(Error::InvalidArgument(format!(
            "expected {} sweeps, got {}",
            config.num_sweeps,
            sweeps.len()
        )));
    }
    let mut grid = BevGrid::zeros(*config)?;
    let binner = Binner::new(config, grid.shape());
    let slices = config.slices();
    let transforms: Vec<SweepTransform> = sweeps
        .iter()
        .enumerate()
        .map(|(k, s)| SweepTransform::new(&s.pose, current_pose, k * slices))
        .collect();

    if threads <= 1 {
        for (sweep, t) in sweeps.iter().zip(&transforms) {
            for p in &sweep.points {
                if let Some(i) = binner.bin(t, p) {
                    grid.set_bit(i);
                }
            }
        }
        return Ok(grid);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    const CHUNK: usize = 16 * 1024;
    for (sweep, t) in sweeps.iter().zip(&transforms) {
        let hits: Vec<Vec<usize>> = pool.install(|| {
            sweep
                .points
                .par_chunks(CHUNK)
                .map(|chunk| chunk.iter().filter_map(|p| binner.bin(t, p)).collect())
                .collect()
        });
        for i in hits.into_iter().flatten() {
            grid.set_bit(i);
        }
    }
    Ok(grid)
}

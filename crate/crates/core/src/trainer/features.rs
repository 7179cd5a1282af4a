use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap, Pose2};
use crate::raster::{
    rasterize_map, rasterize_sweeps, rroi_crop, BevGrid, FeatureGrid, GridConfig, LidarSweep, MapClass, MapLayerSet,
};
use crate::synth::{ActorTrack, Scenario};

/// Grid and crop settings for feature extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub grid: GridConfig,
    /// Side of the actor-centered RROI crop, meters.
    pub crop_m: f64,
    /// Output cells per side of the crop; must be a multiple of 6 so both
    /// the 2x2 and 3x3 poolings tile it exactly.
    pub crop_cells: usize,
    /// Distance reported when no intersection lies inside the crop.
    pub intersection_cap: f64,
}

impl Default for FeatureConfig {
    /// A 100 m x 100 m toy grid at 0.5 m with 10 sweeps.
    fn default() -> Self {
        Self {
            grid: GridConfig {
                length_m: 100.0,
                width_m: 100.0,
                height_m: 3.2,
                dl: 0.5,
                dw: 0.5,
                dv: 0.4,
                num_sweeps: 10,
            },
            crop_m: 40.0,
            crop_cells: 24,
            intersection_cap: 20.0,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.crop_m > 0.0 && self.crop_m.is_finite()) {
            return Err(Error::config("features.crop_m", "must be positive"));
        }
        if self.crop_cells == 0 || !self.crop_cells.is_multiple_of(6) {
            return Err(Error::config("features.crop_cells", "must be a positive multiple of 6"));
        }
        if !(self.intersection_cap > 0.0 && self.intersection_cap.is_finite()) {
            return Err(Error::config("features.intersection_cap", "must be positive"));
        }
        Ok(())
    }
}

pub const STAGE1_FEATURES: [&str; 7] = [
    "speed",
    "yaw_rate",
    "intersection_distance",
    "occupancy_front_left",
    "occupancy_front_right",
    "occupancy_rear_left",
    "occupancy_rear_right",
];

/// Bearing edges (degrees, left positive) of the forward sectors the
/// driving-path layer is pooled over.
pub const SECTOR_EDGES_DEG: [f64; 6] = [-90.0, -50.0, -15.0, 15.0, 50.0, 90.0];
/// Range bands (meters) of the forward sectors.
pub const SECTOR_BANDS_M: [f64; 3] = [4.0, 12.0, 20.0];

const NUM_SECTORS: usize = SECTOR_EDGES_DEG.len() - 1;
const NUM_BANDS: usize = SECTOR_BANDS_M.len() - 1;

/// Names of the refinement-stage features: occupancy means over a 3x3 split
/// of the crop (row 0 = rear, column 0 = right), then driving-path means over
/// forward sectors (sector 0 = rightmost, band 0 = nearest).
pub fn stage2_feature_names() -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..3 {
        for j in 0..3 {
            names.push(format!("occupancy_r{i}c{j}"));
        }
    }
    for s in 0..NUM_SECTORS {
        for b in 0..NUM_BANDS {
            names.push(format!("driving_path_s{s}b{b}"));
        }
    }
    names
}

pub const STAGE2_LEN: usize = 9 + NUM_SECTORS * NUM_BANDS;

/// Per-actor features for both stages. The bias term lives in the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub stage1: Vec<f64>,
    pub stage2: Vec<f64>,
}

/// Occupancy of the newest sweep plus map layers around the SDV at one frame.
#[derive(Debug, Clone)]
pub struct SceneGrid {
    pub frame: usize,
    pub grid: FeatureGrid,
}

impl SceneGrid {
    /// Rasterizes the `T` sweeps ending at `frame` and the map at the SDV pose.
    pub fn new(scenario: &Scenario, sweeps: &[LidarSweep], frame: usize, config: &FeatureConfig) -> Result<Self> {
        let t = config.grid.num_sweeps;
        if frame >= sweeps.len() || frame + 1 < t {
            return Err(Error::InvalidArgument(format!(
                "frame {frame} needs {t} sweeps ending there, have {}",
                sweeps.len()
            )));
        }
        let bev = rasterize_sweeps(&sweeps[frame + 1 - t..=frame], &scenario.sensor_pose(frame), &config.grid)?;
        let map = rasterize_map(&scenario.map, &scenario.sdv_pose(frame), &config.grid)?;
        Self::from_layers(frame, &bev, &map)
    }

    pub fn from_layers(frame: usize, bev: &BevGrid, map: &MapLayerSet) -> Result<Self> {
        Ok(Self {
            frame,
            grid: FeatureGrid::from_layers(bev, map)?,
        })
    }
}

/// Features of `actor` at `frame` from its true pose; `None` without two
/// poses of history.
pub fn extract_features(
    scenario: &Scenario,
    frame: usize,
    actor: &ActorTrack,
    bev: &BevGrid,
    map: &MapLayerSet,
    config: &FeatureConfig,
) -> Result<Option<FeatureVector>> {
    let scene = SceneGrid::from_layers(frame, bev, map)?;
    let [x, y, h] = actor.poses.get(frame).copied().unwrap_or([0.0; 3]);
    features_at(scenario, &scene, actor, Pose2::new(x, y, h), config)
}

/// Features of `actor` with the crop centered on `pose` (a possibly noisy
/// detection). Speed and yaw rate come from the tracked history.
pub fn features_at(
    scenario: &Scenario,
    scene: &SceneGrid,
    actor: &ActorTrack,
    pose: Pose2,
    config: &FeatureConfig,
) -> Result<Option<FeatureVector>> {
    let f = scene.frame;
    if f == 0 || f >= actor.poses.len() {
        return Ok(None);
    }
    let dt = scenario.dt();
    let [x0, y0, h0] = actor.poses[f - 1];
    let [x1, y1, h1] = actor.poses[f];
    let speed = (x1 - x0).hypot(y1 - y0) / dt;
    let yaw_rate = wrap(h1 - h0) / dt;

    let sdv = scenario.sdv_pose(f);
    let center = sdv.to_local([pose.x, pose.y]);
    let crop = rroi_crop(&scene.grid, center, pose.yaw - sdv.yaw, config.crop_m, config.crop_cells)?;
    let n = config.crop_cells;
    let occ = 0;
    let inter = 1 + MapClass::Intersection.channel();
    let path = 1 + MapClass::DrivingPath.channel();

    let mut nearest = config.intersection_cap;
    for i in 0..n {
        for j in 0..n {
            if crop.at(i, j, inter) > 0.5 {
                let [u, v] = crop.cell_center(i, j);
                nearest = nearest.min(u.hypot(v));
            }
        }
    }
    let half = n / 2;
    let mut stage1 = vec![speed, yaw_rate, nearest];
    // rows grow forward, columns grow to the left
    for (rows, cols) in [(half..n, half..n), (half..n, 0..half), (0..half, half..n), (0..half, 0..half)] {
        stage1.push(crop.block_mean(rows, cols, occ));
    }
    let third = n / 3;
    let mut stage2 = Vec::with_capacity(STAGE2_LEN);
    for i in 0..3 {
        for j in 0..3 {
            stage2.push(crop.block_mean(i * third..(i + 1) * third, j * third..(j + 1) * third, occ));
        }
    }
    let mut sum = [0.0; NUM_SECTORS * NUM_BANDS];
    let mut count = [0usize; NUM_SECTORS * NUM_BANDS];
    for i in 0..n {
        for j in 0..n {
            let [u, v] = crop.cell_center(i, j);
            let (r, bearing) = (u.hypot(v), v.atan2(u).to_degrees());
            let band = SECTOR_BANDS_M.windows(2).position(|w| r >= w[0] && r < w[1]);
            let sector = SECTOR_EDGES_DEG.windows(2).position(|w| bearing >= w[0] && bearing < w[1]);
            if let (Some(s), Some(b)) = (sector, band) {
                sum[s * NUM_BANDS + b] += crop.at(i, j, path);
                count[s * NUM_BANDS + b] += 1;
            }
        }
    }
    stage2.extend(sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }));
    Ok(Some(FeatureVector { stage1, stage2 }))
}

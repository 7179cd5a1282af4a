//! Bird's-eye-view encoding of lidar sweeps and map elements, plus the
//! rotated region-of-interest crop used by the refinement stage.

mod bev;
mod bvg;
mod map;
mod rroi;

pub use bev::{rasterize_sweeps, rasterize_sweeps_with_threads, BevGrid, LidarSweep, SensorPose};
pub use bvg::{bvg_byte_len, read_bvg, write_bvg, BVG_HEADER_LEN, BVG_MAGIC, BVG_VERSION};
pub use map::{rasterize_map, MapClass, MapElement, MapGeometry, MapLayerSet, NUM_MAP_CLASSES};
pub use rroi::{rroi_crop, FeatureGrid, DEFAULT_CROP_M, DEFAULT_OUT_CELLS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extents and voxel sizes of the BEV tensor, centered on the vehicle with
/// `x` forward (rows) and `y` left (columns).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub dl: f64,
    pub dw: f64,
    pub dv: f64,
    pub num_sweeps: usize,
}

impl GridConfig {
    /// 150 m x 100 m x 3.2 m at 0.16 m / 0.16 m / 0.2 m with 10 sweeps.
    pub fn long_range() -> Self {
        Self {
            length_m: 150.0,
            width_m: 100.0,
            height_m: 3.2,
            dl: 0.16,
            dw: 0.16,
            dv: 0.2,
            num_sweeps: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("length_m", self.length_m),
            ("width_m", self.width_m),
            ("height_m", self.height_m),
            ("dl", self.dl),
            ("dw", self.dw),
            ("dv", self.dv),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive and finite, got {v}")));
            }
        }
        if self.num_sweeps == 0 {
            return Err(Error::config("num_sweeps", "must be at least 1"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        cells(self.length_m, self.dl)
    }

    pub fn cols(&self) -> usize {
        cells(self.width_m, self.dw)
    }

    pub fn slices(&self) -> usize {
        cells(self.height_m, self.dv)
    }

    /// Center of cell `(row, col)` in the vehicle frame.
    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            -0.5 * self.length_m + (row as f64 + 0.5) * self.dl,
            -0.5 * self.width_m + (col as f64 + 0.5) * self.dw,
        ]
    }
}

fn cells(extent: f64, step: f64) -> usize {
    let n = (extent / step).ceil();
    // guard against 937.5000000001-style ratios turning an exact fit into n+1
    let exact = (extent / step).round();
    if (extent / step - exact).abs() < 1e-9 * exact.max(1.0) {
        exact as usize
    } else {
        n as usize
    }
}

/// `(rows, cols, channels)` of the occupancy tensor.
pub fn grid_shape(config: &GridConfig) -> Result<(usize, usize, usize)> {
    config.validate()?;
    let rows = checked_cells(config.length_m, config.dl, "length_m")?;
    let cols = checked_cells(config.width_m, config.dw, "width_m")?;
    let slices = checked_cells(config.height_m, config.dv, "height_m")?;
    let channels = slices
        .checked_mul(config.num_sweeps)
        .ok_or_else(|| Error::config("num_sweeps", "channel count overflows"))?;
    rows.checked_mul(cols)
        .and_then(|rc| rc.checked_mul(channels))
        .filter(|&n| n <= isize::MAX as usize / 2)
        .ok_or_else(|| Error::config("grid", "cell count overflows"))?;
    Ok((rows, cols, channels))
}

fn checked_cells(extent: f64, step: f64, field: &str) -> Result<usize> {
    let ratio = (extent / step).ceil();
    if !ratio.is_finite() || ratio > (1u64 << 40) as f64 {
        return Err(Error::config(field, "cell count overflows"));
    }
    Ok(cells(extent, step))
}

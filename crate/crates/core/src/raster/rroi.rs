use super::{BevGrid, MapLayerSet};
use crate::error::{Error, Result};

pub const DEFAULT_CROP_M: f64 = 40.0;
pub const DEFAULT_OUT_CELLS: usize = 100;

/// Real-valued multi-channel grid with its own placement in the plane.
///
/// Cell `(r, c)` is centered at `origin + ((r + 0.5) * resolution[0], (c + 0.5) * resolution[1])`,
/// so rows run along `x` and columns along `y`. Data is row-major, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub resolution: [f64; 2],
    pub origin: [f64; 2],
    pub data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(rows: usize, cols: usize, channels: usize, resolution: [f64; 2], origin: [f64; 2]) -> Self {
        Self {
            rows,
            cols,
            channels,
            resolution,
            origin,
            data: vec![0.0; rows * cols * channels],
        }
    }

    /// Fills every cell by evaluating `f` at the cell center.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        channels: usize,
        resolution: [f64; 2],
        origin: [f64; 2],
        mut f: impl FnMut(f64, f64, usize) -> f64,
    ) -> Self {
        let mut g = Self::zeros(rows, cols, channels, resolution, origin);
        for r in 0..rows {
            for c in 0..cols {
                let [x, y] = g.cell_center(r, c);
                for ch in 0..channels {
                    g.data[(r * cols + c) * channels + ch] = f(x, y, ch);
                }
            }
        }
        g
    }

    /// Latest-sweep occupancy (any height) followed by the seven map masks,
    /// in the vehicle frame of the grid.
    pub fn from_layers(bev: &BevGrid, map: &MapLayerSet) -> Result<Self> {
        let (rows, cols, _) = bev.shape();
        if (map.rows, map.cols) != (rows, cols) {
            return Err(Error::InvalidArgument("map layers and occupancy grid differ in size".into()));
        }
        let cfg = &bev.config;
        let channels = 1 + super::NUM_MAP_CLASSES;
        let mut g = Self::zeros(
            rows,
            cols,
            channels,
            [cfg.dl, cfg.dw],
            [-0.5 * cfg.length_m, -0.5 * cfg.width_m],
        );
        let newest = cfg.num_sweeps - 1;
        for r in 0..rows {
            for c in 0..cols {
                let base = (r * cols + c) * channels;
                if bev.column_occupied(r, c, newest) {
                    g.data[base] = 1.0;
                }
                for class in super::MapClass::ALL {
                    if map.get(class, r, c) {
                        g.data[base + 1 + class.channel()] = 1.0;
                    }
                }
            }
        }
        Ok(g)
    }

    pub fn cell_center(&self, r: usize, c: usize) -> [f64; 2] {
        [
            self.origin[0] + (r as f64 + 0.5) * self.resolution[0],
            self.origin[1] + (c as f64 + 0.5) * self.resolution[1],
        ]
    }

    pub fn at(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[(r * self.cols + c) * self.channels + ch]
    }

    #[inline]
    fn fetch(&self, r: isize, c: isize, ch: usize) -> f64 {
        if r < 0 || c < 0 || r as usize >= self.rows || c as usize >= self.cols {
            0.0
        } else {
            self.data[(r as usize * self.cols + c as usize) * self.channels + ch]
        }
    }

    /// Bilinear sample at a plane location; outside the grid reads 0.
    pub fn sample(&self, x: f64, y: f64, out: &mut [f64]) {
        let fr = (x - self.origin[0]) / self.resolution[0] - 0.5;
        let fc = (y - self.origin[1]) / self.resolution[1] - 0.5;
        let r0 = fr.floor();
        let c0 = fc.floor();
        let tr = fr - r0;
        let tc = fc - c0;
        let (r0, c0) = (r0 as isize, c0 as isize);
        for (ch, o) in out.iter_mut().enumerate() {
            let v00 = self.fetch(r0, c0, ch);
            let v01 = self.fetch(r0, c0 + 1, ch);
            let v10 = self.fetch(r0 + 1, c0, ch);
            let v11 = self.fetch(r0 + 1, c0 + 1, ch);
            *o = (1.0 - tr) * ((1.0 - tc) * v00 + tc * v01) + tr * ((1.0 - tc) * v10 + tc * v11);
        }
    }

    /// Mean of channel `ch` over the cell block `rows x cols` (half-open ranges).
    pub fn block_mean(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, ch: usize) -> f64 {
        let n = rows.len() * cols.len();
        if n == 0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for r in rows {
            for c in cols.clone() {
                acc += self.at(r, c, ch);
            }
        }
        acc / n as f64
    }
}

/// Crops a `crop_m` square centered on the actor and rotates it so the actor
/// heading points along the output's row axis ("up").
///
/// Output cell `(i, j)` sits at `(-crop/2 + (i + 0.5) s, -crop/2 + (j + 0.5) s)`
/// in the actor frame (forward, left), `s = crop_m / out_cells`. The returned
/// grid's origin and resolution are expressed in that actor frame.
pub fn rroi_crop(
    feature_grid: &FeatureGrid,
    actor_center: [f64; 2],
    actor_heading: f64,
    crop_m: f64,
    out_cells: usize,
) -> Result<FeatureGrid> {
    if !(actor_center[0].is_finite() && actor_center[1].is_finite() && actor_heading.is_finite()) {
        return Err(Error::InvalidArgument("actor pose is not finite".into()));
    }
    if !(crop_m > 0.0 && crop_m.is_finite()) {
        return Err(Error::InvalidArgument(format!("crop size {crop_m} must be positive")));
    }
    if out_cells == 0 {
        return Err(Error::InvalidArgument("crop needs at least one output cell".into()));
    }
    let step = crop_m / out_cells as f64;
    let half = 0.5 * crop_m;
    let (s, c) = actor_heading.sin_cos();
    let channels = feature_grid.channels;
    let mut out = FeatureGrid::zeros(out_cells, out_cells, channels, [step, step], [-half, -half]);
    let mut px = vec![0.0; channels];
    for i in 0..out_cells {
        let u = -half + (i as f64 + 0.5) * step;
        for j in 0..out_cells {
            let v = -half + (j as f64 + 0.5) * step;
            let x = actor_center[0] + c * u - s * v;
            let y = actor_center[1] + s * u + c * v;
            feature_grid.sample(x, y, &mut px);
            let base = (i * out_cells + j) * channels;
            out.data[base..base + channels].copy_from_slice(&px);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ramp(rows: usize, cols: usize) -> FeatureGrid {
        FeatureGrid::from_fn(rows, cols, 2, [0.5, 0.5], [-0.25 * rows as f64, -0.25 * cols as f64], |x, y, ch| {
            if ch == 0 {
                1.0 + 0.3 * x - 0.2 * y
            } else {
                (0.05 * x).sin() + (0.07 * y).cos()
            }
        })
    }

    #[test]
    fn identity_crop_copies_grid() {
        let g = ramp(40, 40);
        let out = rroi_crop(&g, [0.0, 0.0], 0.0, 20.0, 40).unwrap();
        for (a, b) in out.data.iter().zip(&g.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_stays_constant() {
        let g = FeatureGrid::from_fn(60, 60, 1, [1.0, 1.0], [-30.0, -30.0], |_, _, _| 2.5);
        for heading in [0.0, 0.4, PI / 2.0, -2.9] {
            let out = rroi_crop(&g, [1.0, -2.0], heading, 20.0, 17).unwrap();
            assert!(out.data.iter().all(|v| (v - 2.5).abs() < 1e-12), "heading {heading}");
        }
    }

    #[test]
    fn outside_reads_zero() {
        let g = FeatureGrid::from_fn(10, 10, 1, [1.0, 1.0], [0.0, 0.0], |_, _, _| 1.0);
        let out = rroi_crop(&g, [500.0, 500.0], 0.3, 10.0, 5).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heading_maps_to_rows() {
        // field increasing along world +y; an actor facing +y sees it increase along rows
        let g = FeatureGrid::from_fn(80, 80, 1, [0.5, 0.5], [-20.0, -20.0], |_, y, _| y);
        let out = rroi_crop(&g, [0.0, 0.0], PI / 2.0, 10.0, 10).unwrap();
        assert!(out.at(9, 5, 0) > out.at(0, 5, 0));
        assert!((out.at(9, 5, 0) - out.at(0, 5, 0) - 9.0).abs() < 1e-9);
        // columns increase to the actor's left, i.e. world -x: the field is constant along x
        assert!((out.at(5, 9, 0) - out.at(5, 0, 0)).abs() < 1e-9);
    }

    #[test]
    fn rotation_equivariance_on_linear_field() {
        let field = |x: f64, y: f64| 3.0 + 0.4 * x - 0.7 * y;
        let theta: f64 = 0.83;
        let (s, c) = theta.sin_cos();
        let g0 = FeatureGrid::from_fn(120, 120, 1, [0.5, 0.5], [-30.0, -30.0], |x, y, _| field(x, y));
        // contents rotated by +theta so that heading theta sees the original field
        let g1 = FeatureGrid::from_fn(120, 120, 1, [0.5, 0.5], [-30.0, -30.0], |x, y, _| {
            field(c * x + s * y, -s * x + c * y)
        });
        let a = rroi_crop(&g0, [0.0, 0.0], 0.0, 30.0, 25).unwrap();
        let b = rroi_crop(&g1, [0.0, 0.0], theta, 30.0, 25).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_arguments() {
        let g = ramp(4, 4);
        assert!(rroi_crop(&g, [f64::NAN, 0.0], 0.0, 10.0, 4).is_err());
        assert!(rroi_crop(&g, [0.0, 0.0], f64::INFINITY, 10.0, 4).is_err());
        assert!(rroi_crop(&g, [0.0, 0.0], 0.0, 0.0, 4).is_err());
        assert!(rroi_crop(&g, [0.0, 0.0], 0.0, 10.0, 0).is_err());
    }

    proptest! {
        #[test]
        fn crop_is_linear(
            a in -3.0..3.0f64, b in -3.0..3.0f64,
            cx in -8.0..8.0f64, cy in -8.0..8.0f64, heading in -PI..PI,
        ) {
            let f = ramp(30, 30);
            let g = FeatureGrid::from_fn(30, 30, 2, [0.5, 0.5], [-7.5, -7.5], |x, y, ch| (x * y + ch as f64).cos());
            let mut mix = f.clone();
            for (m, (u, v)) in mix.data.iter_mut().zip(f.data.iter().zip(&g.data)) {
                *m = a * u + b * v;
            }
            let cf = rroi_crop(&f, [cx, cy], heading, 12.0, 9).unwrap();
            let cg = rroi_crop(&g, [cx, cy], heading, 12.0, 9).unwrap();
            let cm = rroi_crop(&mix, [cx, cy], heading, 12.0, 9).unwrap();
            for i in 0..cm.data.len() {
                prop_assert!((cm.data[i] - (a * cf.data[i] + b * cg.data[i])).abs() < 1e-9);
            }
        }
    }
}

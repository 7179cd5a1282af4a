use serde::{Deserialize, Serialize};

use super::GridConfig;
use crate::error::{Error, Result};
use crate::geometry::{Point, Pose2};

pub const NUM_MAP_CLASSES: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapClass {
    DrivingPath,
    Crosswalk,
    LaneBoundary,
    RoadBoundary,
    Intersection,
    Driveway,
    ParkingLot,
}

impl MapClass {
    pub const ALL: [MapClass; NUM_MAP_CLASSES] = [
        MapClass::DrivingPath,
        MapClass::Crosswalk,
        MapClass::LaneBoundary,
        MapClass::RoadBoundary,
        MapClass::Intersection,
        MapClass::Driveway,
        MapClass::ParkingLot,
    ];

    pub fn channel(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapGeometry {
    Polygon { points: Vec<Point> },
    Polyline { points: Vec<Point>, width: f64 },
}

/// A map element in the global frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapElement {
    pub class: MapClass,
    #[serde(flatten)]
    pub geometry: MapGeometry,
}

/// One binary mask per [`MapClass`] over the BEV rows x cols grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapLayerSet {
    pub rows: usize,
    pub cols: usize,
    masks: Vec<Vec<u8>>,
}

impl MapLayerSet {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            masks: vec![vec![0; rows * cols]; NUM_MAP_CLASSES],
        }
    }

    pub fn get(&self, class: MapClass, row: usize, col: usize) -> bool {
        self.masks[class.channel()][row * self.cols + col] == 1
    }

    pub fn mask(&self, class: MapClass) -> &[u8] {
        &self.masks[class.channel()]
    }

    pub fn count(&self, class: MapClass) -> usize {
        self.masks[class.channel()].iter().filter(|&&v| v == 1).count()
    }
}

/// Even-odd point-in-polygon test.
pub(crate) fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - (a[0] + t * dx)).hypot(p[1] - (a[1] + t * dy))
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0 && c[0] >= a[0].min(b[0]) && c[0] <= a[0].max(b[0]) && c[1] >= a[1].min(b[1]) && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Rejects polygons with fewer than three vertices or crossing edges.
pub(crate) fn check_simple(poly: &[Point]) -> Result<()> {
    let n = poly.len();
    if n < 3 {
        return Err(Error::Input(format!("polygon needs at least 3 vertices, got {n}")));
    }
    if poly.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Input("polygon vertex is not finite".into()));
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        for j in i + 1..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return Err(Error::Input(format!("polygon is self-intersecting (edges {i} and {j})")));
            }
        }
    }
    Ok(())
}

/// Inclusive index range of cells whose centers fall within `[lo, hi]`.
fn index_range(lo: f64, hi: f64, half: f64, step: f64, n: usize) -> Option<(usize, usize)> {
    let first = ((lo + half) / step - 0.5).ceil().max(0.0);
    let last = ((hi + half) / step - 0.5).floor().min(n as f64 - 1.0);
    if first > last || !first.is_finite() || !last.is_finite() {
        None
    } else {
        Some((first as usize, last as usize))
    }
}

/// Draws map elements into per-class masks using cell-center containment.
/// Polylines cover cells whose center is within `width / 2` of the line.
pub fn rasterize_map(elements: &[MapElement], current_pose: &Pose2, config: &GridConfig) -> Result<MapLayerSet> {
    let (rows, cols, _) = super::grid_shape(config)?;
    let mut layers = MapLayerSet::empty(rows, cols);
    let half_l = 0.5 * config.length_m;
    let half_w = 0.5 * config.width_m;
    for element in elements {
        let (points, pad) = match &element.geometry {
            MapGeometry::Polygon { points } => {
                check_simple(points)?;
                (points, 0.0)
            }
            MapGeometry::Polyline { points, width } => {
                if points.is_empty() {
                    return Err(Error::Input("polyline has no vertices".into()));
                }
                if !(*width >= 0.0 && width.is_finite()) {
                    return Err(Error::Input(format!("polyline width {width} is invalid")));
                }
                (points, 0.5 * width)
            }
        };
        let local: Vec<Point> = points.iter().map(|&p| current_pose.to_local(p)).collect();
        let (mut xlo, mut xhi, mut ylo, mut yhi) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &local {
            xlo = xlo.min(p[0]);
            xhi = xhi.max(p[0]);
            ylo = ylo.min(p[1]);
            yhi = yhi.max(p[1]);
        }
        let Some((r0, r1)) = index_range(xlo - pad, xhi + pad, half_l, config.dl, rows) else {
            continue;
        };
        let Some((c0, c1)) = index_range(ylo - pad, yhi + pad, half_w, config.dw, cols) else {
            continue;
        };
        let mask = &mut layers.masks[element.class.channel()];
        for r in r0..=r1 {
            for c in c0..=c1 {
                let center = config.cell_center(r, c);
                let hit = match &element.geometry {
                    MapGeometry::Polygon { .. } => point_in_polygon(center, &local),
                    MapGeometry::Polyline { .. } => {
                        if local.len() == 1 {
                            point_segment_distance(center, local[0], local[0]) <= pad
                        } else {
                            local.windows(2).any(|s| point_segment_distance(center, s[0], s[1]) <= pad)
                        }
                    }
                };
                if hit {
                    mask[r * cols + c] = 1;
                }
            }
        }
    }
    Ok(layers)
}

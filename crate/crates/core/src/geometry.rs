//! Planar geometry shared by rasterization, losses and metrics: oriented
//! boxes, rotated IoU, heading arithmetic and the along-track / cross-track
//! error decomposition.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertices of a clipped polygon closer than this are merged.
const MERGE_EPS: f64 = 1e-9;
/// Intersections with smaller area are treated as empty.
const AREA_EPS: f64 = 1e-12;

pub type Point = [f64; 2];

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("angle {theta} is not finite")));
    }
    Ok(wrap(theta))
}

/// Infallible wrap for angles already known to be finite.
pub(crate) fn wrap(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// `(sin θ, cos θ)` encoding used for heading regression targets.
pub fn heading_to_sincos(theta: f64) -> Result<(f64, f64)> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("heading {theta} is not finite")));
    }
    Ok(theta.sin_cos())
}

/// Inverse of [`heading_to_sincos`]; the pair need not be unit length.
pub fn sincos_to_heading(sin: f64, cos: f64) -> Result<f64> {
    if !sin.is_finite() || !cos.is_finite() {
        return Err(Error::Domain("sin/cos pair is not finite".into()));
    }
    if sin == 0.0 && cos == 0.0 {
        return Err(Error::Domain("heading of a zero (sin, cos) pair".into()));
    }
    Ok(wrap(sin.atan2(cos)))
}

/// Rigid planar transform: rotation by `yaw` followed by translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw }
    }

    /// Maps a point from this pose's local frame into the parent frame.
    pub fn to_parent(&self, p: Point) -> Point {
        let (s, c) = self.yaw.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a point from the parent frame into this pose's local frame.
    pub fn to_local(&self, p: Point) -> Point {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub cx: f64,
    pub cy: f64,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl OrientedBox {
    pub fn new(cx: f64, cy: f64, length: f64, width: f64, heading: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidArgument("box center is not finite".into()));
        }
        if !(length > 0.0 && length.is_finite() && width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "box extents must be positive, got {length} x {width}"
            )));
        }
        Ok(Self {
            cx,
            cy,
            length,
            width,
            heading: normalize_angle(heading)?,
        })
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Corners in counter-clockwise order, starting at the front-left corner.
    pub fn corners(&self) -> [Point; 4] {
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let pose = Pose2::new(self.cx, self.cy, self.heading);
        [
            pose.to_parent([hl, hw]),
            pose.to_parent([-hl, hw]),
            pose.to_parent([-hl, -hw]),
            pose.to_parent([hl, -hw]),
        ]
    }

    /// True if `p` lies inside the box grown by `margin` on every side.
    pub fn contains(&self, p: Point, margin: f64) -> bool {
        let local = Pose2::new(self.cx, self.cy, self.heading).to_local(p);
        local[0].abs() <= 0.5 * self.length + margin && local[1].abs() <= 0.5 * self.width + margin
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.cx
            .total_cmp(&other.cx)
            .then(self.cy.total_cmp(&other.cy))
            .then(self.length.total_cmp(&other.length))
            .then(self.width.total_cmp(&other.width))
            .then(self.heading.total_cmp(&other.heading))
    }

    fn same_set(&self, other: &Self) -> bool {
        if self.cx != other.cx
            || self.cy != other.cy
            || self.length != other.length
            || self.width != other.width
        {
            return false;
        }
        let d = wrap(self.heading - other.heading);
        d == 0.0 || d == PI
    }
}

pub fn box_corners(b: &OrientedBox) -> [Point; 4] {
    b.corners()
}

/// Signed area of a polygon (positive for counter-clockwise winding).
pub fn shoelace_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn push_merged(out: &mut Vec<Point>, p: Point) {
    if let Some(last) = out.last() {
        if (last[0] - p[0]).abs() < MERGE_EPS && (last[1] - p[1]).abs() < MERGE_EPS {
            return;
        }
    }
    out.push(p);
}

/// Sutherland–Hodgman clip of `subject` against the convex CCW polygon `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_side = cross(a, b, cur);
            let prev_side = cross(a, b, prev);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    push_merged(&mut output, segment_line_intersection(prev, cur, prev_side, cur_side));
                }
                push_merged(&mut output, cur);
            } else if prev_side >= 0.0 {
                push_merged(&mut output, segment_line_intersection(prev, cur, prev_side, cur_side));
            }
        }
        // closing duplicate
        while output.len() > 1 {
            let first = output[0];
            let last = output[output.len() - 1];
            if (first[0] - last[0]).abs() < MERGE_EPS && (first[1] - last[1]).abs() < MERGE_EPS {
                output.pop();
            } else {
                break;
            }
        }
    }
    if output.len() < 3 {
        output.clear();
    }
    output
}

fn segment_line_intersection(p: Point, q: Point, p_side: f64, q_side: f64) -> Point {
    let t = p_side / (p_side - q_side);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Area of the intersection of two oriented boxes.
pub fn intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let poly = clip_convex(&a.corners(), &b.corners());
    let area = shoelace_area(&poly);
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

/// Intersection over union of two oriented boxes in the plane.
///
/// The box is treated as a point set, so headings `θ` and `θ + π` describe the
/// same box. The computation is ordered canonically, which makes the result
/// exactly symmetric in its arguments.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a.same_set(b) {
        return 1.0;
    }
    let (first, second) = match a.total_cmp(b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let dx = first.cx - second.cx;
    let dy = first.cy - second.cy;
    let reach = 0.5 * (first.length.hypot(first.width) + second.length.hypot(second.width));
    if dx * dx + dy * dy > reach * reach {
        return 0.0;
    }
    let inter = intersection_area(first, second);
    if inter == 0.0 {
        return 0.0;
    }
    let union = first.area() + second.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub cx: f64,
    pub cy: f64,
    pub heading: f64,
}

impl Waypoint {
    pub fn new(cx: f64, cy: f64, heading: f64) -> Result<Self> {
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidArgument("waypoint position is not finite".into()));
        }
        Ok(Self {
            cx,
            cy,
            heading: normalize_angle(heading)?,
        })
    }

    pub fn position(&self) -> Point {
        [self.cx, self.cy]
    }

    pub fn distance(&self, other: &Waypoint) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

/// Future waypoints `h = 1..=H` together with the current state at `h = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub origin: Waypoint,
    pub waypoints: Vec<Waypoint>,
    pub horizon_dt: f64,
}

impl Trajectory {
    pub fn new(origin: Waypoint, waypoints: Vec<Waypoint>, horizon_dt: f64) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one waypoint".into()));
        }
        if !(horizon_dt > 0.0 && horizon_dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon step {horizon_dt} must be positive")));
        }
        Ok(Self {
            origin,
            waypoints,
            horizon_dt,
        })
    }

    pub fn horizon(&self) -> usize {
        self.waypoints.len()
    }

    /// Waypoint at horizon `h`, where `h = 0` is the origin.
    pub fn at(&self, h: usize) -> Option<&Waypoint> {
        if h == 0 {
            Some(&self.origin)
        } else {
            self.waypoints.get(h - 1)
        }
    }

    /// Heading change between the origin and the final waypoint, in `(-π, π]`.
    pub fn heading_change(&self) -> f64 {
        let last = self.waypoints[self.waypoints.len() - 1];
        wrap(last.heading - self.origin.heading)
    }
}

/// Signed along-track / cross-track components of a waypoint error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtCtError {
    pub at: f64,
    /// Positive to the left of the ground-truth heading.
    pub ct: f64,
}

impl AtCtError {
    pub fn norm(&self) -> f64 {
        self.at.hypot(self.ct)
    }
}

/// Projects `predicted - truth` onto the ground-truth heading frame.
pub fn decompose_at_ct(predicted: &Waypoint, truth: &Waypoint) -> AtCtError {
    decompose_offset(
        predicted.cx - truth.cx,
        predicted.cy - truth.cy,
        truth.heading,
    )
}

pub(crate) fn decompose_offset(dx: f64, dy: f64, heading: f64) -> AtCtError {
    let (s, c) = heading.sin_cos();
    AtCtError {
        at: dx * c + dy * s,
        ct: -dx * s + dy * c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!(close(normalize_angle(3.0 * PI).unwrap(), PI, 1e-12));
        assert_eq!(normalize_angle(-PI).unwrap(), PI);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn corners_examples() {
        let unit = OrientedBox::new(0.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let c = unit.corners();
        assert_eq!(c, [[0.5, 0.5], [-0.5, 0.5], [-0.5, -0.5], [0.5, -0.5]]);
        assert!(shoelace_area(&c) > 0.0);

        let rotated = OrientedBox::new(0.0, 0.0, 2.0, 1.0, PI / 2.0).unwrap();
        let expected = [[-0.5, 1.0], [-0.5, -1.0], [0.5, -1.0], [0.5, 1.0]];
        for (got, want) in rotated.corners().iter().zip(expected.iter()) {
            assert!(close(got[0], want[0], 1e-12) && close(got[1], want[1], 1e-12), "{got:?}");
        }

        let shifted = OrientedBox::new(10.0, 5.0, 4.0, 2.0, 0.0).unwrap();
        assert_eq!(shifted.corners(), [[12.0, 6.0], [8.0, 6.0], [8.0, 4.0], [12.0, 4.0]]);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(OrientedBox::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(OrientedBox::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(OrientedBox::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = OrientedBox::new(0.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(rotated_iou(&a, &a), 1.0);
        let b = OrientedBox::new(1.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        assert!(close(rotated_iou(&a, &b), 1.0 / 3.0, 1e-12));
        let far = OrientedBox::new(100.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(rotated_iou(&a, &far), 0.0);
    }

    #[test]
    fn iou_ignores_heading_flip() {
        let a = OrientedBox::new(3.0, -1.0, 4.5, 2.0, 0.3).unwrap();
        let b = OrientedBox::new(3.0, -1.0, 4.5, 2.0, 0.3 + PI).unwrap();
        assert_eq!(rotated_iou(&a, &b), 1.0);
    }

    #[test]
    fn iou_touching_edges_is_zero() {
        let a = OrientedBox::new(0.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        let b = OrientedBox::new(2.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        assert_eq!(rotated_iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_rotated_square_in_square() {
        // A square rotated by 45 degrees inscribed in an axis-aligned one.
        let outer = OrientedBox::new(0.0, 0.0, 2.0, 2.0, 0.0).unwrap();
        let inner = OrientedBox::new(0.0, 0.0, 2f64.sqrt(), 2f64.sqrt(), PI / 4.0).unwrap();
        assert!(close(rotated_iou(&outer, &inner), 0.5, 1e-12));
    }

    #[test]
    fn at_ct_examples() {
        let truth = Waypoint::new(0.0, 0.0, 0.0).unwrap();
        let pred = Waypoint::new(3.0, 4.0, 0.0).unwrap();
        let e = decompose_at_ct(&pred, &truth);
        assert_eq!((e.at, e.ct), (3.0, 4.0));

        let truth = Waypoint::new(0.0, 0.0, PI / 2.0).unwrap();
        let e = decompose_at_ct(&pred, &truth);
        assert!(close(e.at, 4.0, 1e-12) && close(e.ct, -3.0, 1e-12));

        let e = decompose_at_ct(&truth, &truth);
        assert_eq!((e.at, e.ct), (0.0, 0.0));
    }

    #[test]
    fn sincos_examples() {
        assert_eq!(heading_to_sincos(0.0).unwrap(), (0.0, 1.0));
        let (s, c) = heading_to_sincos(PI / 2.0).unwrap();
        assert!(close(s, 1.0, 1e-15) && close(c, 0.0, 1e-15));
        let (s, c) = heading_to_sincos(2.5).unwrap();
        assert!(close(sincos_to_heading(s, c).unwrap(), 2.5, 1e-12));
        assert!(close(sincos_to_heading(3.0 * s, 3.0 * c).unwrap(), 2.5, 1e-12));
        assert!(sincos_to_heading(0.0, 0.0).is_err());
    }

    #[test]
    fn trajectory_heading_change_wraps() {
        let origin = Waypoint::new(0.0, 0.0, 3.0).unwrap();
        let end = Waypoint::new(1.0, 0.0, -3.0).unwrap();
        let t = Trajectory::new(origin, vec![end], 0.1).unwrap();
        assert!(close(t.heading_change(), 2.0 * PI - 6.0, 1e-12));
        assert!(Trajectory::new(origin, vec![], 0.1).is_err());
        assert!(Trajectory::new(origin, vec![end], 0.0).is_err());
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox> {
        (-5.0..5.0f64, -5.0..5.0f64, 0.2..6.0f64, 0.2..6.0f64, -PI..PI)
            .prop_map(|(x, y, l, w, h)| OrientedBox::new(x, y, l, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = rotated_iou(&a, &b);
            let ba = rotated_iou(&b, &a);
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn normalize_idempotent_and_congruent(theta in -100.0..100.0f64) {
            let n = normalize_angle(theta).unwrap();
            prop_assert!(n > -PI && n <= PI);
            prop_assert_eq!(normalize_angle(n).unwrap(), n);
            let k = ((theta - n) / TAU).round();
            prop_assert!((theta - n - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn at_ct_is_isometry(
            px in -50.0..50.0f64, py in -50.0..50.0f64,
            tx in -50.0..50.0f64, ty in -50.0..50.0f64, th in -PI..PI,
        ) {
            let truth = Waypoint::new(tx, ty, th).unwrap();
            let pred = Waypoint::new(px, py, 0.0).unwrap();
            let e = decompose_at_ct(&pred, &truth);
            let d2 = (px - tx).powi(2) + (py - ty).powi(2);
            let n2 = e.at * e.at + e.ct * e.ct;
            prop_assert!((n2 - d2).abs() <= 1e-9 * d2.max(1e-300));
        }

        #[test]
        fn at_ct_invariant_under_common_rigid_motion(
            px in -20.0..20.0f64, py in -20.0..20.0f64,
            tx in -20.0..20.0f64, ty in -20.0..20.0f64, th in -PI..PI,
            rx in -30.0..30.0f64, ry in -30.0..30.0f64, rot in -PI..PI,
        ) {
            let motion = Pose2::new(rx, ry, rot);
            let truth = Waypoint::new(tx, ty, th).unwrap();
            let pred = Waypoint::new(px, py, 0.0).unwrap();
            let before = decompose_at_ct(&pred, &truth);
            let t2 = motion.to_parent([tx, ty]);
            let p2 = motion.to_parent([px, py]);
            let truth2 = Waypoint::new(t2[0], t2[1], th + rot).unwrap();
            let pred2 = Waypoint::new(p2[0], p2[1], 0.0).unwrap();
            let after = decompose_at_ct(&pred2, &truth2);
            prop_assert!((before.at - after.at).abs() < 1e-9);
            prop_assert!((before.ct - after.ct).abs() < 1e-9);
        }
    }
}

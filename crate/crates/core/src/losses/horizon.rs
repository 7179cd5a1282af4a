use super::primitives::{
    focal_loss, gaussian_kl, gaussian_nll, laplace_kl, laplace_nll, smooth_l1, softplus, softplus_grad, ScaleLoss,
};
use super::{Axis, DiversitySchedule, LossProfile, LossWeights};
use crate::error::{Error, Result};
use crate::geometry::{decompose_offset, Waypoint};

/// Raw network outputs for one waypoint.
///
/// `at_scale_pre` / `ct_scale_pre` are unconstrained; the predicted scale is
/// their [`softplus`]. They are ignored by [`LossProfile::SmoothL1`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WaypointOutput {
    pub cx: f64,
    pub cy: f64,
    pub sin: f64,
    pub cos: f64,
    pub at_scale_pre: f64,
    pub ct_scale_pre: f64,
}

impl WaypointOutput {
    pub const LEN: usize = 6;

    pub fn to_array(self) -> [f64; 6] {
        [self.cx, self.cy, self.sin, self.cos, self.at_scale_pre, self.ct_scale_pre]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            cx: v[0],
            cy: v[1],
            sin: v[2],
            cos: v[3],
            at_scale_pre: v[4],
            ct_scale_pre: v[5],
        }
    }

    pub fn at_scale(&self) -> f64 {
        softplus(self.at_scale_pre)
    }

    pub fn ct_scale(&self) -> f64 {
        softplus(self.ct_scale_pre)
    }

    pub fn heading(&self) -> f64 {
        self.sin.atan2(self.cos)
    }
}

/// Gradient of a loss with respect to the fields of a [`WaypointOutput`].
pub type WaypointOutputGrad = WaypointOutput;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOutput {
    pub p_hat: f64,
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionTarget {
    pub length: f64,
    pub width: f64,
}

/// One BEV cell's contribution to the training loss.
#[derive(Debug, Clone, Copy)]
pub enum CellLoss<'a> {
    Background {
        p_hat: f64,
    },
    /// `predictions[h]` and `targets[h]` describe horizon `h = 0..=H`, with
    /// `h = 0` the current detection.
    Foreground {
        detection: DetectionOutput,
        target: DetectionTarget,
        predictions: &'a [WaypointOutput],
        targets: &'a [Waypoint],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonLossOutput {
    pub value: f64,
    pub d_p_hat: f64,
    pub d_length: f64,
    pub d_width: f64,
    /// One entry per horizon; empty for background cells.
    pub d_waypoints: Vec<WaypointOutputGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTermsOutput {
    pub value: f64,
    pub d_waypoints: Vec<WaypointOutputGrad>,
}

fn position_term(
    profile: LossProfile,
    pred: &WaypointOutput,
    target: &Waypoint,
    t: f64,
    schedule: &DiversitySchedule,
    grad: &mut WaypointOutputGrad,
    weight: f64,
) -> Result<f64> {
    let dx = pred.cx - target.cx;
    let dy = pred.cy - target.cy;
    if profile == LossProfile::SmoothL1 {
        let lx = smooth_l1(dx);
        let ly = smooth_l1(dy);
        grad.cx += weight * lx.grad;
        grad.cy += weight * ly.grad;
        return Ok(lx.value + ly.value);
    }
    let err = decompose_offset(dx, dy, target.heading);
    let at_hat = pred.at_scale();
    let ct_hat = pred.ct_scale();
    let b_at = schedule.at(t, Axis::AlongTrack);
    let b_ct = schedule.at(t, Axis::CrossTrack);
    let (la, lc): (ScaleLoss, ScaleLoss) = match profile {
        LossProfile::KlLaplace => (laplace_kl(err.at, at_hat, b_at)?, laplace_kl(err.ct, ct_hat, b_ct)?),
        LossProfile::KlGaussian => (gaussian_kl(err.at, at_hat, b_at)?, gaussian_kl(err.ct, ct_hat, b_ct)?),
        LossProfile::NllLaplace => (laplace_nll(err.at, at_hat)?, laplace_nll(err.ct, ct_hat)?),
        LossProfile::NllGaussian => (gaussian_nll(err.at, at_hat)?, gaussian_nll(err.ct, ct_hat)?),
        LossProfile::SmoothL1 => unreachable!(),
    };
    let (s, c) = target.heading.sin_cos();
    // at = dx c + dy s, ct = -dx s + dy c
    grad.cx += weight * (la.d_error * c - lc.d_error * s);
    grad.cy += weight * (la.d_error * s + lc.d_error * c);
    grad.at_scale_pre += weight * la.d_scale * softplus_grad(pred.at_scale_pre);
    grad.ct_scale_pre += weight * lc.d_scale * softplus_grad(pred.ct_scale_pre);
    Ok(la.value + lc.value)
}

/// Position and heading terms for consecutive horizons `first_h, first_h + 1, ...`.
///
/// `predictions[i]` is compared with `targets[i]` at horizon `h = first_h + i`,
/// weighted by `λ^h` and using the diversity schedule at `t = h·dt`.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_terms(
    predictions: &[WaypointOutput],
    targets: &[Waypoint],
    first_h: usize,
    dt: f64,
    profile: LossProfile,
    schedule: &DiversitySchedule,
    weights: &LossWeights,
) -> Result<TrajectoryTermsOutput> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted horizons but {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut value = 0.0;
    let mut d_waypoints = vec![WaypointOutputGrad::default(); predictions.len()];
    for (i, ((pred, target), grad)) in predictions.iter().zip(targets).zip(&mut d_waypoints).enumerate() {
        let h = first_h + i;
        let w = weights.horizon_weight(h);
        let pos = position_term(profile, pred, target, h as f64 * dt, schedule, grad, w)?;
        let (ts, tc) = target.heading.sin_cos();
        let ls = smooth_l1(pred.sin - ts);
        let lc = smooth_l1(pred.cos - tc);
        grad.sin += w * ls.grad;
        grad.cos += w * lc.grad;
        value += w * (pos + ls.value + lc.value);
    }
    Ok(TrajectoryTermsOutput { value, d_waypoints })
}

/// Loss of one cell, summed over horizons with per-horizon decay.
///
/// Foreground cells add the focal and box-size terms at `h = 0` and position
/// plus heading terms at every horizon; background cells contribute only the
/// focal term.
pub fn horizon_loss(
    cell: &CellLoss<'_>,
    profile: LossProfile,
    schedule: &DiversitySchedule,
    weights: &LossWeights,
    dt: f64,
) -> Result<HorizonLossOutput> {
    match *cell {
        CellLoss::Background { p_hat } => {
            let f = focal_loss(p_hat, false, weights.gamma_focal);
            Ok(HorizonLossOutput {
                value: f.value,
                d_p_hat: f.grad,
                d_length: 0.0,
                d_width: 0.0,
                d_waypoints: Vec::new(),
            })
        }
        CellLoss::Foreground {
            detection,
            target,
            predictions,
            targets,
        } => {
            if predictions.len() < 2 {
                return Err(Error::InvalidArgument(
                    "foreground loss needs the current state and at least one future horizon".into(),
                ));
            }
            let traj = trajectory_terms(predictions, targets, 0, dt, profile, schedule, weights)?;
            let f = focal_loss(detection.p_hat, true, weights.gamma_focal);
            let l = smooth_l1(detection.length - target.length);
            let w = smooth_l1(detection.width - target.width);
            Ok(HorizonLossOutput {
                value: f.value + l.value + w.value + traj.value,
                d_p_hat: f.grad,
                d_length: l.grad,
                d_width: w.grad,
                d_waypoints: traj.d_waypoints,
            })
        }
    }
}

use std::f64::consts::{PI, TAU};

use super::horizon::{trajectory_terms, WaypointOutput, WaypointOutputGrad};
use super::{DiversitySchedule, LossProfile, LossWeights};
use crate::error::{Error, Result};
use crate::geometry::{wrap, Trajectory};

/// Smallest probability used inside the cross-entropy log.
const PROB_FLOOR: f64 = 1e-12;
/// Heading changes this close to a bin edge (in units of bin width) count as on the edge.
const EDGE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeAssignment {
    pub mode_index: usize,
    /// `M + 1` increasing edges from `-π` to `π`; mode `k` covers `(edges[k], edges[k+1]]`.
    pub bin_edges: Vec<f64>,
}

/// Bins the heading change of a ground-truth trajectory into one of `m`
/// equal intervals of `(-π, π]`, index 0 being the most negative (right turns).
pub fn assign_mode(traj_gt: &Trajectory, m: usize) -> Result<ModeAssignment> {
    if m == 0 {
        return Err(Error::InvalidArgument("mode count must be at least 1".into()));
    }
    let width = TAU / m as f64;
    let bin_edges = (0..=m).map(|k| -PI + k as f64 * width).collect();
    Ok(ModeAssignment {
        mode_index: mode_of_heading_change(traj_gt.heading_change(), m),
        bin_edges,
    })
}

pub(crate) fn mode_of_heading_change(delta: f64, m: usize) -> usize {
    let delta = wrap(delta);
    let k = ((delta + PI) / (TAU / m as f64) - EDGE_SNAP).ceil() as isize - 1;
    k.clamp(0, m as isize - 1) as usize
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Per-mode future trajectories (`h = 1..=H`) and mode probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOutputs {
    pub trajectories: Vec<Vec<WaypointOutput>>,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalLossOutput {
    pub value: f64,
    pub mode: usize,
    pub cross_entropy: f64,
    /// Same shape as the predicted trajectories; only the selected mode is non-zero.
    pub d_trajectories: Vec<Vec<WaypointOutputGrad>>,
    /// Gradient with respect to the softmax logits that produced the probabilities.
    pub d_logits: Vec<f64>,
}

/// Trajectory loss of the ground-truth mode plus the mode cross-entropy.
pub fn multimodal_loss(
    pred: &ModeOutputs,
    traj_gt: &Trajectory,
    profile: LossProfile,
    schedule: &DiversitySchedule,
    weights: &LossWeights,
) -> Result<MultimodalLossOutput> {
    let m = pred.probabilities.len();
    if m == 0 || pred.trajectories.len() != m {
        return Err(Error::InvalidArgument(format!(
            "{} mode probabilities for {} trajectories",
            m,
            pred.trajectories.len()
        )));
    }
    if pred.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidArgument("mode probabilities must lie in [0, 1]".into()));
    }
    let total: f64 = pred.probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("mode probabilities sum to {total}, not 1")));
    }
    let mode = assign_mode(traj_gt, m)?.mode_index;
    let traj = trajectory_terms(
        &pred.trajectories[mode],
        &traj_gt.waypoints,
        1,
        traj_gt.horizon_dt,
        profile,
        schedule,
        weights,
    )?;
    let cross_entropy = -pred.probabilities[mode].max(PROB_FLOOR).ln();
    let mut d_trajectories: Vec<Vec<WaypointOutputGrad>> = pred
        .trajectories
        .iter()
        .map(|t| vec![WaypointOutputGrad::default(); t.len()])
        .collect();
    d_trajectories[mode] = traj.d_waypoints;
    let d_logits = pred
        .probabilities
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == mode { p - 1.0 } else { p })
        .collect();
    Ok(MultimodalLossOutput {
        value: traj.value + cross_entropy,
        mode,
        cross_entropy,
        d_trajectories,
        d_logits,
    })
}

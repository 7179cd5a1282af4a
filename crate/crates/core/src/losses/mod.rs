//! Training losses with closed-form values and first derivatives.
//!
//! Every function returns the loss together with its gradient with respect
//! to each prediction parameter, so callers can run plain gradient descent
//! without an autodiff engine.

mod horizon;
mod modes;
mod primitives;

pub use horizon::{
    horizon_loss, trajectory_terms, CellLoss, DetectionOutput, DetectionTarget, HorizonLossOutput,
    TrajectoryTermsOutput, WaypointOutput, WaypointOutputGrad,
};
pub use modes::{assign_mode, multimodal_loss, softmax, ModeAssignment, ModeOutputs, MultimodalLossOutput};
pub use primitives::{
    focal_loss, gaussian_kl, gaussian_nll, inverse_softplus, laplace_kl, laplace_nll, smooth_l1, softplus,
    softplus_grad, Grad1, ScaleLoss, FOCAL_EPS, SOFTPLUS_FLOOR,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How waypoint positions are penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossProfile {
    /// Smooth-ℓ1 on the x / y center residuals.
    SmoothL1,
    /// KL divergence between Laplace distributions on along/cross-track errors.
    KlLaplace,
    KlGaussian,
    NllLaplace,
    NllGaussian,
}

impl LossProfile {
    pub const ALL: [LossProfile; 5] = [
        LossProfile::SmoothL1,
        LossProfile::KlLaplace,
        LossProfile::KlGaussian,
        LossProfile::NllLaplace,
        LossProfile::NllGaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossProfile::SmoothL1 => "smooth_l1",
            LossProfile::KlLaplace => "kl_laplace",
            LossProfile::KlGaussian => "kl_gaussian",
            LossProfile::NllLaplace => "nll_laplace",
            LossProfile::NllGaussian => "nll_gaussian",
        }
    }

    /// True if the profile predicts along/cross-track scales.
    pub fn is_probabilistic(self) -> bool {
        self != LossProfile::SmoothL1
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|p| p.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for LossProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            Error::config(
                "loss_profile",
                format!("unknown loss profile `{s}`; valid names: {}", Self::valid_names()),
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    AlongTrack,
    CrossTrack,
}

/// Ground-truth diversity growing linearly with the prediction horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversitySchedule {
    pub alpha_at: f64,
    pub beta_at: f64,
    pub alpha_ct: f64,
    pub beta_ct: f64,
}

impl Default for DiversitySchedule {
    fn default() -> Self {
        Self {
            alpha_at: 0.2,
            beta_at: 0.3,
            alpha_ct: 0.2,
            beta_ct: 0.1,
        }
    }
}

impl DiversitySchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha_at", self.alpha_at), ("alpha_ct", self.alpha_ct)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta_at", self.beta_at), ("beta_ct", self.beta_ct)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha_at: self.alpha_at * factor,
            beta_at: self.beta_at * factor,
            alpha_ct: self.alpha_ct * factor,
            beta_ct: self.beta_ct * factor,
        }
    }

    pub fn at(&self, t: f64, axis: Axis) -> f64 {
        match axis {
            Axis::AlongTrack => self.alpha_at + self.beta_at * t,
            Axis::CrossTrack => self.alpha_ct + self.beta_ct * t,
        }
    }
}

pub fn diversity_at(schedule: &DiversitySchedule, t: f64, axis: Axis) -> f64 {
    schedule.at(t, axis)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Per-horizon decay; horizon `h` is weighted by `lambda_decay^h`.
    pub lambda_decay: f64,
    pub gamma_focal: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_decay: 0.97,
            gamma_focal: 2.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_decay > 0.0 && self.lambda_decay < 1.0) {
            return Err(Error::config("lambda_decay", "must lie in (0, 1)"));
        }
        if !(self.gamma_focal >= 0.0 && self.gamma_focal.is_finite()) {
            return Err(Error::config("gamma_focal", "must be non-negative"));
        }
        Ok(())
    }

    pub fn horizon_weight(&self, h: usize) -> f64 {
        self.lambda_decay.powi(h as i32)
    }
}

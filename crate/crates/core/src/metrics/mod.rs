//! Detection and prediction evaluation: greedy rotated-IoU matching, average
//! precision, the recall operating point, displacement / cross-track errors
//! and reliability diagrams.

mod ap;
mod matching;
mod prediction;
mod reliability;
mod report;

pub use ap::{average_precision, operating_threshold, OperatingPoint, ScoredOutcome};
pub use matching::{match_boxes, match_detections, Matching};
pub use prediction::{prediction_errors, ErrorSummary, PredictionErrors};
pub use reliability::{
    coverage_curve, default_levels, laplace_half_width, reliability_diagram, ReliabilityCurves, NUM_LEVELS,
};
pub use report::{evaluate_frames, reliability_svg, ClassReport, EvalReport, FrameEval, Variant, REPORT_CSV_HEADER, RELIABILITY_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::class::ActorClass;
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Trajectory};

/// Per-waypoint Laplace diversities of one predicted trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDistribution {
    pub b_at: Vec<f64>,
    pub b_ct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedMode {
    pub trajectory: Trajectory,
    pub distribution: Option<TrajectoryDistribution>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalPrediction {
    pub modes: Vec<PredictedMode>,
}

impl MultimodalPrediction {
    pub fn new(modes: Vec<PredictedMode>) -> Result<Self> {
        let p = Self { modes };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidArgument("prediction needs at least one mode".into()));
        }
        let total: f64 = self.modes.iter().map(|m| m.probability).sum();
        if self.modes.iter().any(|m| !(0.0..=1.0).contains(&m.probability)) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("mode probabilities sum to {total}, not 1")));
        }
        for m in &self.modes {
            if let Some(d) = &m.distribution {
                let n = m.trajectory.horizon();
                if d.b_at.len() != n || d.b_ct.len() != n {
                    return Err(Error::InvalidArgument("diversity count differs from waypoint count".into()));
                }
                if d.b_at.iter().chain(&d.b_ct).any(|b| !(*b > 0.0)) {
                    return Err(Error::InvalidArgument("diversities must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Index of the most probable mode, lowest index on ties.
    pub fn highest_prob_index(&self) -> usize {
        let mut best = 0;
        for (k, m) in self.modes.iter().enumerate() {
            if m.probability > self.modes[best].probability {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: OrientedBox,
    pub score: f64,
    pub class: ActorClass,
    pub prediction: MultimodalPrediction,
}

/// Ground-truth actor at the evaluation frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledActor {
    pub bbox: OrientedBox,
    pub class: ActorClass,
    pub future: Trajectory,
}

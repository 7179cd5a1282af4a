use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::{FeatureConfig, StageMode};
use crate::class::ActorClass;
use crate::error::{Error, Result};
use crate::geometry::{Pose2, Trajectory, Waypoint};
use crate::losses::{softmax, LossProfile, WaypointOutput};
use crate::metrics::{MultimodalPrediction, PredictedMode, TrajectoryDistribution};

pub const MODEL_FORMAT: &str = "bevmotion-model";
pub const MODEL_VERSION: u32 = 1;

/// The first-head endpoint enters the second head scaled by this factor.
pub const ENDPOINT_SCALE: f64 = 0.1;

/// `y = W [x; 1]` with `W` stored row-major, `dim_out` rows of `dim_in + 1`
/// (bias last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub dim_in: usize,
    pub dim_out: usize,
    pub weights: Vec<f64>,
}

impl Affine {
    pub fn zeros(dim_in: usize, dim_out: usize) -> Self {
        Self {
            dim_in,
            dim_out,
            weights: vec![0.0; dim_out * (dim_in + 1)],
        }
    }

    pub fn bias_mut(&mut self, row: usize) -> &mut f64 {
        let k = row * (self.dim_in + 1) + self.dim_in;
        &mut self.weights[k]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim_in);
        self.weights
            .chunks_exact(self.dim_in + 1)
            .map(|row| row[..self.dim_in].iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + row[self.dim_in])
            .collect()
    }

    /// Accumulates `dL/dW` into `grad` and, if asked, `dL/dx` into `d_x`.
    pub fn backward(&self, x: &[f64], d_out: &[f64], grad: &mut [f64], mut d_x: Option<&mut [f64]>) {
        let stride = self.dim_in + 1;
        for (o, &g) in d_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &mut grad[o * stride..(o + 1) * stride];
            for (r, v) in row.iter_mut().zip(x) {
                *r += g * v;
            }
            row[self.dim_in] += g;
            if let Some(d) = d_x.as_deref_mut() {
                let w = &self.weights[o * stride..o * stride + self.dim_in];
                for (di, wi) in d.iter_mut().zip(w) {
                    *di += g * wi;
                }
            }
        }
    }
}

/// Per-feature z-scoring fitted on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for r in rows {
            n += 1;
            for k in 0..dim {
                sum[k] += r[k];
                sq[k] += r[k] * r[k];
            }
        }
        let n = n.max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                // constant features pass through centered but unscaled
                if var > 1e-12 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s));
    }
}

/// Heads of one actor class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHeads {
    pub class: ActorClass,
    pub stage1_norm: Normalizer,
    /// Six outputs per horizon `0..=H`: `cx, cy, sin, cos, at_pre, ct_pre`.
    pub stage1: Affine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_norm: Option<Normalizer>,
    /// One head per mode with six outputs per horizon `1..=H` and a logit.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage2: Vec<Affine>,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub x1: Vec<f64>,
    pub out1: Vec<f64>,
    pub x2: Vec<f64>,
    pub out2: Vec<Vec<f64>>,
}

impl ClassHeads {
    pub fn num_modes(&self) -> usize {
        self.stage2.len()
    }

    /// Input of the second stage: both feature sets then the scaled endpoint.
    pub fn stage2_dim(&self) -> usize {
        self.stage1.dim_in + self.stage2_norm.as_ref().map_or(0, |n| n.mean.len()) + 2
    }

    pub fn forward(&self, f: &FeatureVector, horizon: usize) -> Forward {
        let mut x1 = Vec::with_capacity(self.stage1.dim_in);
        self.stage1_norm.apply(&f.stage1, &mut x1);
        let out1 = self.stage1.forward(&x1);
        let (x2, out2) = match &self.stage2_norm {
            Some(norm) if !self.stage2.is_empty() => {
                let mut x2 = x1.clone();
                norm.apply(&f.stage2, &mut x2);
                let end = horizon * WaypointOutput::LEN;
                x2.push(ENDPOINT_SCALE * out1[end]);
                x2.push(ENDPOINT_SCALE * out1[end + 1]);
                let out2 = self.stage2.iter().map(|h| h.forward(&x2)).collect();
                (x2, out2)
            }
            _ => (Vec::new(), Vec::new()),
        };
        Forward { x1, out1, x2, out2 }
    }
}

pub(crate) fn waypoint_outputs(flat: &[f64]) -> Vec<WaypointOutput> {
    flat.chunks_exact(WaypointOutput::LEN).map(WaypointOutput::from_slice).collect()
}

/// Fitted prediction heads, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub version: u32,
    pub stage: StageMode,
    pub loss_profile: LossProfile,
    pub horizon: usize,
    pub dt: f64,
    pub features: FeatureConfig,
    pub stage1_features: Vec<String>,
    pub stage2_features: Vec<String>,
    pub heads: Vec<ClassHeads>,
}

impl Model {
    pub fn heads(&self, class: ActorClass) -> Option<&ClassHeads> {
        self.heads.iter().find(|h| h.class == class)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Model = serde_json::from_str(text).map_err(|e| Error::format("model", e.to_string()))?;
        if m.format != MODEL_FORMAT || m.version != MODEL_VERSION {
            return Err(Error::format(
                "model",
                format!("unsupported model `{}` version {}", m.format, m.version),
            ));
        }
        for h in &m.heads {
            let d1 = m.stage1_features.len();
            let ok1 = h.stage1.dim_in == d1
                && h.stage1.dim_out == WaypointOutput::LEN * (m.horizon + 1)
                && h.stage1.weights.len() == h.stage1.dim_out * (d1 + 1)
                && h.stage1_norm.mean.len() == d1
                && h.stage1_norm.std.len() == d1;
            let d2 = h.stage2_dim();
            let ok2 = h.stage2.iter().all(|a| {
                a.dim_in == d2
                    && a.dim_out == WaypointOutput::LEN * m.horizon + 1
                    && a.weights.len() == a.dim_out * (d2 + 1)
            });
            if !(ok1 && ok2) {
                return Err(Error::format("model", format!("{} head shapes do not match the model", h.class)));
            }
        }
        Ok(m)
    }

    /// Predicted modes of an actor detected at `pose` (global), in the
    /// global frame.
    pub fn predict(&self, class: ActorClass, f: &FeatureVector, pose: Pose2) -> Result<MultimodalPrediction> {
        let heads = self
            .heads(class)
            .ok_or_else(|| Error::InvalidArgument(format!("model has no heads for class {class}")))?;
        let fw = heads.forward(f, self.horizon);
        let origin = Waypoint::new(pose.x, pose.y, pose.yaw)?;
        let mode = |outs: &[WaypointOutput], probability: f64| -> Result<PredictedMode> {
            let waypoints = outs
                .iter()
                .map(|o| {
                    let [x, y] = pose.to_parent([o.cx, o.cy]);
                    Waypoint::new(x, y, pose.yaw + o.heading())
                })
                .collect::<Result<Vec<_>>>()?;
            let distribution = self.loss_profile.is_probabilistic().then(|| TrajectoryDistribution {
                b_at: outs.iter().map(|o| o.at_scale()).collect(),
                b_ct: outs.iter().map(|o| o.ct_scale()).collect(),
            });
            Ok(PredictedMode {
                trajectory: Trajectory::new(origin, waypoints, self.dt)?,
                distribution,
                probability,
            })
        };
        let modes = if self.stage == StageMode::TwoStage && !fw.out2.is_empty() {
            let n = WaypointOutput::LEN * self.horizon;
            let logits: Vec<f64> = fw.out2.iter().map(|o| o[n]).collect();
            let probs = softmax(&logits);
            fw.out2
                .iter()
                .zip(probs)
                .map(|(o, p)| mode(&waypoint_outputs(&o[..n]), p))
                .collect::<Result<Vec<_>>>()?
        } else {
            let outs = waypoint_outputs(&fw.out1);
            vec![mode(&outs[1..], 1.0)?]
        };
        MultimodalPrediction::new(modes)
    }
}

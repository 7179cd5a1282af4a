//! A small gradient-descent harness fitting affine prediction heads over
//! handcrafted per-actor features with the losses of [`crate::losses`].
//!
//! Detection is not learned: the toy pipeline detects every actor at a
//! noisy pose with a noisy score (see [`DetectionNoise`]).

mod eval;
mod features;
mod model;
mod train;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use eval::{evaluate, EvalConfig, OraclePredictor, Predictor};
pub use features::{
    extract_features, features_at, stage2_feature_names, FeatureConfig, FeatureVector, SceneGrid, STAGE1_FEATURES,
    STAGE2_LEN,
};
pub use model::{Affine, ClassHeads, Forward, Model, Normalizer, ENDPOINT_SCALE, MODEL_FORMAT, MODEL_VERSION};
pub use train::{
    build_dataset, init_model, loss_csv, sample_loss, train, ClassGrad, Dataset, LossRecord, Sample, TrainOutput,
    LOSS_CSV_HEADER,
};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::losses::{DiversitySchedule, LossProfile, LossWeights};
use crate::raster::LidarSweep;
use crate::synth::rng::{streams, StreamRng};
use crate::synth::{load_sweeps, read_scenario, ActorTrack, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMode {
    FirstOnly,
    TwoStage,
}

/// Corruption model turning ground-truth boxes into detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionNoise {
    /// Standard deviation of the position error, meters.
    pub position_sigma: f64,
    /// Standard deviation of the heading error, radians.
    pub heading_sigma: f64,
    /// Scores are `1 - score_noise * u` with `u ~ U[0, 1)`.
    pub score_noise: f64,
    pub miss_rate: f64,
}

impl Default for DetectionNoise {
    fn default() -> Self {
        Self {
            position_sigma: 0.1,
            heading_sigma: 0.02,
            score_noise: 0.3,
            miss_rate: 0.0,
        }
    }
}

impl DetectionNoise {
    pub const NONE: DetectionNoise = DetectionNoise {
        position_sigma: 0.0,
        heading_sigma: 0.0,
        score_noise: 0.0,
        miss_rate: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("detection.position_sigma", self.position_sigma),
            ("detection.heading_sigma", self.heading_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.score_noise) {
            return Err(Error::config("detection.score_noise", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.miss_rate) {
            return Err(Error::config("detection.miss_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Detected pose and score of `actor` at the current frame, or `None`
    /// if it is missed. Draws come from the actor's own stream.
    pub fn corrupt(&self, scenario: &Scenario, actor: &ActorTrack) -> Option<(Pose2, f64)> {
        let f = scenario.current_frame;
        let mut rng = StreamRng::new(scenario.seed, streams::DETECTIONS, f as u64, actor.id as u64);
        let miss = rng.uniform() < self.miss_rate;
        let score = 1.0 - self.score_noise * rng.uniform();
        let mut pose_rng = StreamRng::new(scenario.seed, streams::POSE_NOISE, f as u64, actor.id as u64);
        let [x, y, h] = actor.poses[f];
        let pose = Pose2::new(
            x + self.position_sigma * pose_rng.normal(),
            y + self.position_sigma * pose_rng.normal(),
            h + self.heading_sigma * pose_rng.normal(),
        );
        (!miss).then_some((pose, score))
    }
}

/// Where the training scenarios live.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub scenario_dir: Option<PathBuf>,
}

/// Training settings, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub iterations: usize,
    /// Samples per step; 0 means the full dataset.
    pub batch_size: usize,
    pub loss_profile: String,
    pub stage: StageMode,
    /// Steps that extract features at the true poses before switching to
    /// corrupted detections.
    pub warmup_iterations: usize,
    pub schedule: DiversitySchedule,
    pub weights: LossWeights,
    pub features: FeatureConfig,
    pub detection: DetectionNoise,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            learning_rate: 0.05,
            iterations: 1000,
            batch_size: 0,
            loss_profile: LossProfile::KlLaplace.name().to_string(),
            stage: StageMode::FirstOnly,
            warmup_iterations: 250,
            schedule: DiversitySchedule::default(),
            weights: LossWeights::default(),
            features: FeatureConfig::default(),
            detection: DetectionNoise::default(),
            data: DataConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn profile(&self) -> Result<LossProfile> {
        self.loss_profile.parse()
    }

    pub fn validate(&self) -> Result<()> {
        self.profile()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        self.schedule.validate()?;
        self.weights.validate()?;
        self.features.validate()?;
        self.detection.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::Input(format!("train config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// A scenario together with its sweeps.
pub type Scene = (Scenario, Vec<LidarSweep>);

/// Every `*.json` in `dir` that has a `.pts` sweep file beside it, in
/// file-name order.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.with_extension("pts").is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no scenario files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let sc = read_scenario(p)?;
            let sweeps = load_sweeps(p, &sc)?;
            Ok((sc, sweeps))
        })
        .collect()
}

/// Scenes from a directory or a single scenario file.
pub fn load_scenes(path: &Path) -> Result<Vec<Scene>> {
    if path.is_dir() {
        load_scene_dir(path)
    } else {
        let sc = read_scenario(path)?;
        let sweeps = load_sweeps(path, &sc)?;
        Ok(vec![(sc, sweeps)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let c = TrainConfig {
            stage: StageMode::TwoStage,
            data: DataConfig { scenario_dir: Some("scenes".into()) },
            ..TrainConfig::default()
        };
        let back = TrainConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let partial = TrainConfig::from_toml("iterations = 7\nstage = \"two_stage\"\n").unwrap();
        assert_eq!(partial.iterations, 7);
        assert_eq!(partial.stage, StageMode::TwoStage);
    }

    #[test]
    fn bad_profile_lists_valid_names() {
        let err = TrainConfig::from_toml("loss_profile = \"kl_cauchy\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(err.is_usage());
        for name in ["smooth_l1", "kl_laplace", "kl_gaussian", "nll_laplace", "nll_gaussian"] {
            assert!(msg.contains(name), "{msg}");
        }
        assert!(TrainConfig::from_toml("learning_rate = -1.0\n").is_err());
        assert!(TrainConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn zero_noise_detection_is_exact() {
        let sc = crate::synth::generate(&crate::synth::ScenarioSpec { seed: 3, num_actors: 4, ..Default::default() })
            .unwrap();
        for a in &sc.actors {
            let (p, s) = DetectionNoise::NONE.corrupt(&sc, a).unwrap();
            let [x, y, h] = a.poses[sc.current_frame];
            assert_eq!((p.x, p.y, p.yaw, s), (x, y, h, 1.0));
            let (q, s) = DetectionNoise::default().corrupt(&sc, a).unwrap();
            assert!((q.x - x).abs() < 1.0 && (0.7..=1.0).contains(&s));
        }
    }
}

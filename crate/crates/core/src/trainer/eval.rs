use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{features_at, SceneGrid};
use super::{DetectionNoise, FeatureConfig, Model, Scene};
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose2, Trajectory, Waypoint};
use crate::metrics::{
    default_levels, evaluate_frames, Detection, EvalReport, FrameEval, LabeledActor, MultimodalPrediction,
    PredictedMode,
};
use crate::synth::{ActorTrack, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Time of the waypoint DE and CT are reported at, seconds.
    pub horizon_s: f64,
    pub target_recall: f64,
    pub detection: DetectionNoise,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            horizon_s: 3.0,
            target_recall: 0.8,
            detection: DetectionNoise::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return Err(Error::config("horizon_s", "must be positive"));
        }
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(Error::config("target_recall", "must lie in (0, 1]"));
        }
        self.detection.validate()
    }
}

/// Anything that forecasts a detected actor.
pub trait Predictor: Sync {
    /// Grid settings the predictor needs, or `None` if it ignores the sensor.
    fn feature_config(&self) -> Option<&FeatureConfig>;

    /// Modes in the global frame for `actor` detected at `pose`; `None`
    /// skips the detection.
    fn predict(
        &self,
        scenario: &Scenario,
        scene: Option<&SceneGrid>,
        actor: &ActorTrack,
        pose: Pose2,
    ) -> Result<Option<MultimodalPrediction>>;
}

impl Predictor for Model {
    fn feature_config(&self) -> Option<&FeatureConfig> {
        Some(&self.features)
    }

    fn predict(
        &self,
        scenario: &Scenario,
        scene: Option<&SceneGrid>,
        actor: &ActorTrack,
        pose: Pose2,
    ) -> Result<Option<MultimodalPrediction>> {
        let scene = scene.ok_or_else(|| Error::InvalidArgument("model prediction needs a feature grid".into()))?;
        if scenario.horizon() != self.horizon || (scenario.dt() - self.dt).abs() > 1e-12 {
            return Err(Error::Input(format!(
                "scenario horizon {} at {} s differs from the model's {} at {} s",
                scenario.horizon(),
                scenario.dt(),
                self.horizon,
                self.dt
            )));
        }
        match features_at(scenario, scene, actor, pose, &self.features)? {
            Some(f) => Ok(Some(Model::predict(self, actor.class, &f, pose)?)),
            None => Ok(None),
        }
    }
}

/// Returns each actor's true future as a single certain mode.
#[derive(Debug, Clone, Copy, Default)]
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn feature_config(&self) -> Option<&FeatureConfig> {
        None
    }

    fn predict(
        &self,
        scenario: &Scenario,
        _scene: Option<&SceneGrid>,
        actor: &ActorTrack,
        pose: Pose2,
    ) -> Result<Option<MultimodalPrediction>> {
        let future = actor.future(scenario.current_frame, scenario.dt());
        let trajectory = Trajectory::new(Waypoint::new(pose.x, pose.y, pose.yaw)?, future.waypoints, future.horizon_dt)?;
        Ok(Some(MultimodalPrediction::new(vec![PredictedMode {
            trajectory,
            distribution: None,
            probability: 1.0,
        }])?))
    }
}

fn frame_eval<P: Predictor + ?Sized>(predictor: &P, (sc, sweeps): &Scene, detection: &DetectionNoise) -> Result<FrameEval> {
    let scene = match predictor.feature_config() {
        Some(cfg) => Some(SceneGrid::new(sc, sweeps, sc.current_frame, cfg)?),
        None => None,
    };
    let f = sc.current_frame;
    let mut labels = Vec::with_capacity(sc.actors.len());
    let mut detections = Vec::new();
    for actor in &sc.actors {
        labels.push(LabeledActor {
            bbox: actor.bbox(f),
            class: actor.class,
            future: actor.labeled_future(f, sc.dt()),
        });
        let Some((pose, score)) = detection.corrupt(sc, actor) else {
            continue;
        };
        let Some(prediction) = predictor.predict(sc, scene.as_ref(), actor, pose)? else {
            continue;
        };
        detections.push(Detection {
            bbox: OrientedBox::new(pose.x, pose.y, actor.length, actor.width, pose.yaw)?,
            score,
            class: actor.class,
            prediction,
        });
    }
    Ok(FrameEval { detections, labels })
}

/// Detects every actor at each scene's current frame through the corruption
/// model, forecasts it with `predictor` and scores the result against the
/// scenes' future labels (the clean tracks when a scene carries none).
pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, scenes: &[Scene], config: &EvalConfig) -> Result<EvalReport> {
    config.validate()?;
    let Some((first, _)) = scenes.first() else {
        return Err(Error::Input("no scenes to evaluate".into()));
    };
    let horizon = (config.horizon_s * first.frame_rate).round() as usize;
    for (sc, _) in scenes {
        if horizon == 0 || horizon > sc.horizon() {
            return Err(Error::config(
                "horizon_s",
                format!("{} s is outside the {}-waypoint future of the scenes", config.horizon_s, sc.horizon()),
            ));
        }
    }
    let frames: Vec<Result<FrameEval>> = scenes.par_iter().map(|s| frame_eval(predictor, s, &config.detection)).collect();
    let frames = frames.into_iter().collect::<Result<Vec<_>>>()?;
    evaluate_frames(&frames, horizon, config.target_recall, &default_levels())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::ActorClass;
    use crate::metrics::Variant;
    use crate::synth::{generate, simulate_all_sweeps, ScenarioSpec};

    fn scenes() -> Vec<Scene> {
        (0..3)
            .map(|i| {
                let sc = generate(&ScenarioSpec { seed: 40 + i, num_actors: 30, ..ScenarioSpec::default() }).unwrap();
                let sw = simulate_all_sweeps(&sc).unwrap();
                (sc, sw)
            })
            .collect()
    }

    #[test]
    fn perfect_predictor_on_clean_detections() {
        let cfg = EvalConfig { detection: DetectionNoise::NONE, ..EvalConfig::default() };
        let report = evaluate(&OraclePredictor, &scenes(), &cfg).unwrap();
        assert_eq!(report.horizon, 30);
        for class in ActorClass::ALL {
            let c = report.class(class);
            assert_eq!(c.ap, Some(1.0), "{class}");
            assert_eq!(c.num_tp, c.num_labels);
            for v in [Variant::HighestProb, Variant::MinOverM] {
                let e = c.variant(v).unwrap();
                assert_eq!((e.de_cm, e.ct_cm), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn noisy_detections_still_match() {
        let report = evaluate(&OraclePredictor, &scenes(), &EvalConfig::default()).unwrap();
        let v = report.class(ActorClass::Vehicle);
        assert!(v.ap.unwrap() > 0.99);
        assert!(v.num_tp > 0);
    }

    #[test]
    fn horizon_must_fit() {
        let cfg = EvalConfig { horizon_s: 9.0, ..EvalConfig::default() };
        assert!(evaluate(&OraclePredictor, &scenes(), &cfg).is_err());
        assert!(evaluate(&OraclePredictor, &[], &EvalConfig::default()).is_err());
    }
}

use rayon::prelude::*;

use super::features::{features_at, stage2_feature_names, FeatureVector, SceneGrid, STAGE1_FEATURES};
use super::model::{waypoint_outputs, Affine, ClassHeads, Model, Normalizer, ENDPOINT_SCALE, MODEL_FORMAT, MODEL_VERSION};
use super::{DetectionNoise, FeatureConfig, Scene, StageMode, TrainConfig};
use crate::class::ActorClass;
use crate::error::{Error, Result};
use crate::geometry::{Pose2, Trajectory, Waypoint};
use crate::losses::{
    assign_mode, inverse_softplus, multimodal_loss, softmax, trajectory_terms, Axis, ModeOutputs, WaypointOutput,
};
use crate::synth::rng::{streams, StreamRng};
use crate::synth::Maneuver;

/// One training actor seen two ways: index 0 with the crop on the true pose,
/// index 1 on the corrupted detection.
#[derive(Debug, Clone)]
pub struct Sample {
    pub class: ActorClass,
    pub maneuver: Maneuver,
    pub features: [FeatureVector; 2],
    /// Current state and future labels (`h = 0..=H`) in the matching actor frame.
    pub targets: [Vec<Waypoint>; 2],
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub horizon: usize,
    pub dt: f64,
    pub samples: Vec<Sample>,
}

fn local_targets(frame: Pose2, traj: &Trajectory) -> Result<Vec<Waypoint>> {
    std::iter::once(&traj.origin)
        .chain(&traj.waypoints)
        .map(|w| {
            let [x, y] = frame.to_local([w.cx, w.cy]);
            Waypoint::new(x, y, w.heading - frame.yaw)
        })
        .collect()
}

/// Features and actor-frame targets for every actor at each scene's current
/// frame. Targets use the (possibly noisy) future labels.
pub fn build_dataset(scenes: &[Scene], features: &FeatureConfig, detection: &DetectionNoise) -> Result<Dataset> {
    let Some((first, _)) = scenes.first() else {
        return Err(Error::Input("no scenes to build a dataset from".into()));
    };
    let (horizon, dt) = (first.horizon(), first.dt());
    for (sc, _) in scenes {
        if sc.horizon() != horizon || sc.dt() != dt {
            return Err(Error::Input("scenes differ in horizon or frame rate".into()));
        }
    }
    let per_scene: Vec<Result<Vec<Sample>>> = scenes
        .par_iter()
        .map(|(sc, sweeps)| {
            let scene = SceneGrid::new(sc, sweeps, sc.current_frame, features)?;
            let mut out = Vec::new();
            for actor in &sc.actors {
                let [x, y, h] = actor.poses[sc.current_frame];
                let truth = Pose2::new(x, y, h);
                let noisy = detection.corrupt(sc, actor).map_or(truth, |(p, _)| p);
                let (Some(f0), Some(f1)) = (
                    features_at(sc, &scene, actor, truth, features)?,
                    features_at(sc, &scene, actor, noisy, features)?,
                ) else {
                    continue;
                };
                let future = actor.labeled_future(sc.current_frame, dt);
                out.push(Sample {
                    class: actor.class,
                    maneuver: actor.maneuver,
                    features: [f0, f1],
                    targets: [local_targets(truth, &future)?, local_targets(noisy, &future)?],
                });
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::new();
    for s in per_scene {
        samples.extend(s?);
    }
    Ok(Dataset { horizon, dt, samples })
}

fn mean_outputs(samples: &[&Sample], first_h: usize, horizon: usize, config: &TrainConfig, dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(WaypointOutput::LEN * (horizon + 1 - first_h));
    let n = samples.len().max(1) as f64;
    for h in first_h..=horizon {
        let mean = |f: &dyn Fn(&Waypoint) -> f64| samples.iter().map(|s| f(&s.targets[0][h])).sum::<f64>() / n;
        let t = h as f64 * dt;
        out.extend([
            mean(&|w| w.cx),
            mean(&|w| w.cy),
            mean(&|w| w.heading.sin()),
            mean(&|w| w.heading.cos()),
            inverse_softplus(config.schedule.at(t, Axis::AlongTrack)),
            inverse_softplus(config.schedule.at(t, Axis::CrossTrack)),
        ]);
    }
    out
}

/// Zero weights with biases at the mean target; second-stage modes start at
/// the mean of the actors their bin covers.
pub fn init_model(dataset: &Dataset, config: &TrainConfig) -> Result<Model> {
    config.validate()?;
    let h = dataset.horizon;
    let d1 = STAGE1_FEATURES.len();
    let mut heads = Vec::new();
    for class in ActorClass::ALL {
        let samples: Vec<&Sample> = dataset.samples.iter().filter(|s| s.class == class).collect();
        if samples.is_empty() {
            continue;
        }
        let stage1_norm = Normalizer::fit(samples.iter().map(|s| s.features[0].stage1.as_slice()), d1);
        let mut stage1 = Affine::zeros(d1, WaypointOutput::LEN * (h + 1));
        for (row, b) in mean_outputs(&samples, 0, h, config, dataset.dt).into_iter().enumerate() {
            *stage1.bias_mut(row) = b;
        }
        let mut c = ClassHeads {
            class,
            stage1_norm,
            stage1,
            stage2_norm: None,
            stage2: Vec::new(),
        };
        let m = class.num_modes();
        if config.stage == StageMode::TwoStage && m > 1 {
            let d2 = samples[0].features[0].stage2.len();
            c.stage2_norm = Some(Normalizer::fit(samples.iter().map(|s| s.features[0].stage2.as_slice()), d2));
            let dim_in = c.stage2_dim();
            for k in 0..m {
                let mut members = Vec::new();
                for s in &samples {
                    let traj = Trajectory::new(s.targets[0][0], s.targets[0][1..].to_vec(), dataset.dt)?;
                    if assign_mode(&traj, m)?.mode_index == k {
                        members.push(*s);
                    }
                }
                let pool = if members.is_empty() { &samples } else { &members };
                let mut a = Affine::zeros(dim_in, WaypointOutput::LEN * h + 1);
                for (row, b) in mean_outputs(pool, 1, h, config, dataset.dt).into_iter().enumerate() {
                    *a.bias_mut(row) = b;
                }
                c.stage2.push(a);
            }
        }
        heads.push(c);
    }
    Ok(Model {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        stage: config.stage,
        loss_profile: config.profile()?,
        horizon: h,
        dt: dataset.dt,
        features: config.features,
        stage1_features: STAGE1_FEATURES.iter().map(|s| s.to_string()).collect(),
        stage2_features: stage2_feature_names(),
        heads,
    })
}

/// Gradient buffers shaped like one class's heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGrad {
    pub stage1: Vec<f64>,
    pub stage2: Vec<Vec<f64>>,
}

impl ClassGrad {
    fn zeros(h: &ClassHeads) -> Self {
        Self {
            stage1: vec![0.0; h.stage1.weights.len()],
            stage2: h.stage2.iter().map(|a| vec![0.0; a.weights.len()]).collect(),
        }
    }

    fn add(&mut self, other: &ClassGrad) {
        for (a, b) in self.stage1.iter_mut().zip(&other.stage1) {
            *a += b;
        }
        for (x, y) in self.stage2.iter_mut().zip(&other.stage2) {
            for (a, b) in x.iter_mut().zip(y) {
                *a += b;
            }
        }
    }
}

fn flatten(d: &[WaypointOutput]) -> Vec<f64> {
    d.iter().flat_map(|g| g.to_array()).collect()
}

/// First- and second-stage loss of one sample, accumulating parameter
/// gradients into `grad`. The second stage's gradient with respect to the
/// first head's endpoint is passed back at unit scale.
pub fn sample_loss(
    model: &Model,
    config: &TrainConfig,
    sample: &Sample,
    view: usize,
    grad: &mut ClassGrad,
) -> Result<(f64, f64)> {
    let heads = model
        .heads(sample.class)
        .ok_or_else(|| Error::InvalidArgument(format!("model has no heads for class {}", sample.class)))?;
    let (h, dt) = (model.horizon, model.dt);
    let targets = &sample.targets[view];
    let fw = heads.forward(&sample.features[view], h);
    let t1 = trajectory_terms(
        &waypoint_outputs(&fw.out1),
        targets,
        0,
        dt,
        model.loss_profile,
        &config.schedule,
        &config.weights,
    )?;
    let mut d_out1 = flatten(&t1.d_waypoints);
    let mut l2 = 0.0;
    if !fw.out2.is_empty() {
        let n = WaypointOutput::LEN * h;
        let logits: Vec<f64> = fw.out2.iter().map(|o| o[n]).collect();
        let pred = ModeOutputs {
            trajectories: fw.out2.iter().map(|o| waypoint_outputs(&o[..n])).collect(),
            probabilities: softmax(&logits),
        };
        let gt = Trajectory::new(targets[0], targets[1..].to_vec(), dt)?;
        let mm = multimodal_loss(&pred, &gt, model.loss_profile, &config.schedule, &config.weights)?;
        l2 = mm.value;
        let mut d_x2 = vec![0.0; fw.x2.len()];
        for (k, head) in heads.stage2.iter().enumerate() {
            let mut d = flatten(&mm.d_trajectories[k]);
            d.push(mm.d_logits[k]);
            head.backward(&fw.x2, &d, &mut grad.stage2[k], Some(&mut d_x2));
        }
        let m = d_x2.len();
        d_out1[n] += ENDPOINT_SCALE * d_x2[m - 2];
        d_out1[n + 1] += ENDPOINT_SCALE * d_x2[m - 1];
    }
    heads.stage1.backward(&fw.x1, &d_out1, &mut grad.stage1, None);
    Ok((t1.value, l2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    pub stage1: f64,
    pub stage2: f64,
}

pub const LOSS_CSV_HEADER: &str = "iteration,loss,stage1,stage2";

pub fn loss_csv(curve: &[LossRecord]) -> String {
    let mut s = String::from(LOSS_CSV_HEADER);
    s.push('\n');
    for r in curve {
        s.push_str(&format!("{},{},{},{}\n", r.iteration, r.loss, r.stage1, r.stage2));
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    /// Batch loss before each step.
    pub curve: Vec<LossRecord>,
}

/// A batch is split into this many fixed chunks whose gradients are summed
/// in order, so results do not depend on the thread count.
const CHUNKS: usize = 16;

pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Mean batch loss and its gradient over `batch` (indices into the dataset).
fn batch_gradient(
    model: &Model,
    config: &TrainConfig,
    dataset: &Dataset,
    batch: &[usize],
    view: usize,
) -> Result<(Vec<ClassGrad>, f64, f64)> {
    let chunk = batch.len().div_ceil(CHUNKS).max(1);
    let zeros = || model.heads.iter().map(ClassGrad::zeros).collect::<Vec<_>>();
    let parts: Vec<Result<(Vec<ClassGrad>, f64, f64)>> = batch
        .par_chunks(chunk)
        .map(|idx| {
            let mut g = zeros();
            let (mut l1, mut l2) = (0.0, 0.0);
            for &i in idx {
                let s = &dataset.samples[i];
                let k = model.heads.iter().position(|h| h.class == s.class).expect("heads for every class");
                let (a, b) = sample_loss(model, config, s, view, &mut g[k])?;
                l1 += a;
                l2 += b;
            }
            Ok((g, l1, l2))
        })
        .collect();
    let mut total = zeros();
    let (mut l1, mut l2) = (0.0, 0.0);
    for p in parts {
        let (g, a, b) = p?;
        for (t, x) in total.iter_mut().zip(&g) {
            t.add(x);
        }
        l1 += a;
        l2 += b;
    }
    let n = batch.len() as f64;
    for g in &mut total {
        g.stage1.iter_mut().for_each(|v| *v /= n);
        g.stage2.iter_mut().flatten().for_each(|v| *v /= n);
    }
    Ok((total, l1 / n, l2 / n))
}

/// Fits the heads by plain gradient descent.
///
/// Each step uses the next batch of a per-epoch shuffle; the first
/// `warmup_iterations` steps see features cropped at the true poses, later
/// ones at the corrupted detections.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    if dataset.samples.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let mut model = init_model(dataset, config)?;
    let n = dataset.samples.len();
    let bs = if config.batch_size == 0 || config.batch_size >= n { n } else { config.batch_size };
    let per_epoch = n.div_ceil(bs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let k = it % per_epoch;
        if bs < n && k == 0 {
            order = (0..n).collect();
            StreamRng::new(config.seed, streams::SHUFFLE, (it / per_epoch) as u64, 0).shuffle(&mut order);
        }
        let batch = &order[k * bs..((k + 1) * bs).min(n)];
        let view = usize::from(it >= config.warmup_iterations);
        let (grad, l1, l2) = batch_gradient(&model, config, dataset, batch, view)?;
        let loss = l1 + l2;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::Diverged { iteration: it, loss });
        }
        curve.push(LossRecord { iteration: it, loss, stage1: l1, stage2: l2 });
        let lr = config.learning_rate;
        for (heads, g) in model.heads.iter_mut().zip(&grad) {
            for (w, d) in heads.stage1.weights.iter_mut().zip(&g.stage1) {
                *w -= lr * d;
            }
            for (a, gm) in heads.stage2.iter_mut().zip(&g.stage2) {
                for (w, d) in a.weights.iter_mut().zip(gm) {
                    *w -= lr * d;
                }
            }
        }
        let finite = model
            .heads
            .iter()
            .all(|h| h.stage1.weights.iter().chain(h.stage2.iter().flat_map(|a| &a.weights)).all(|w| w.is_finite()));
        if !finite {
            return Err(Error::Diverged { iteration: it, loss });
        }
    }
    Ok(TrainOutput { model, curve })
}

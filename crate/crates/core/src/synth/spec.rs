use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::class::ActorClass;
use crate::error::{Error, Result};
use crate::losses::DiversitySchedule;

/// Relative class frequencies; counts are apportioned from these exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRatios {
    pub vehicle: f64,
    pub pedestrian: f64,
    pub bicyclist: f64,
}

impl Default for ClassRatios {
    /// 3.2x fewer pedestrians and 15x fewer bicyclists than vehicles.
    fn default() -> Self {
        Self {
            vehicle: 1.0,
            pedestrian: 1.0 / 3.2,
            bicyclist: 1.0 / 15.0,
        }
    }
}

impl ClassRatios {
    pub fn get(&self, class: ActorClass) -> f64 {
        match class {
            ActorClass::Vehicle => self.vehicle,
            ActorClass::Pedestrian => self.pedestrian,
            ActorClass::Bicyclist => self.bicyclist,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManeuverMix {
    pub straight: f64,
    pub left_turn: f64,
    pub right_turn: f64,
}

impl Default for ManeuverMix {
    fn default() -> Self {
        Self {
            straight: 1.0,
            left_turn: 1.0,
            right_turn: 1.0,
        }
    }
}

/// `[min, max]` speeds in m/s per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedRanges {
    pub vehicle: [f64; 2],
    pub pedestrian: [f64; 2],
    pub bicyclist: [f64; 2],
}

impl Default for SpeedRanges {
    fn default() -> Self {
        Self {
            vehicle: [5.0, 15.0],
            pedestrian: [0.5, 2.0],
            bicyclist: [3.0, 7.0],
        }
    }
}

impl SpeedRanges {
    pub fn get(&self, class: ActorClass) -> [f64; 2] {
        match class {
            ActorClass::Vehicle => self.vehicle,
            ActorClass::Pedestrian => self.pedestrian,
            ActorClass::Bicyclist => self.bicyclist,
        }
    }
}

/// Simulated lidar parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSpec {
    /// Sensor height above the ground plane, meters.
    pub height: f64,
    pub points_per_actor: usize,
    pub clutter_points: usize,
    /// Ground clutter is spread over a square of this half-size around the SDV.
    pub clutter_extent: f64,
    /// Half-width of the uniform range noise applied along each surface normal.
    pub noise: f64,
    /// Probability of dropping each sampled return.
    pub dropout: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            height: 1.6,
            points_per_actor: 48,
            clutter_points: 200,
            clutter_extent: 50.0,
            noise: 0.03,
            dropout: 0.0,
        }
    }
}

/// Scenario generation settings, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// Seconds; `duration * frame_rate` must be a whole number of frames.
    pub duration: f64,
    pub frame_rate: f64,
    /// Frames up to and including the current one.
    pub history_frames: usize,
    pub num_actors: usize,
    /// Actors start inside `[-spawn_extent, spawn_extent]²` around the SDV.
    pub spawn_extent: f64,
    pub sdv_speed: f64,
    /// Draw per-actor routes and scenery into the map.
    pub map: bool,
    pub class_ratios: ClassRatios,
    pub maneuver_mix: ManeuverMix,
    pub speeds: SpeedRanges,
    pub sensor: SensorSpec,
    /// Laplace noise applied to the future labels, if any.
    pub label_noise: Option<DiversitySchedule>,
    /// Lane-snapping annotation errors added on top of the label noise.
    pub outliers: Option<OutlierSpec>,
}

/// A `fraction` of actors get future labels shifted `offset` meters to the
/// left, ramping in over `ramp` waypoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierSpec {
    pub fraction: f64,
    pub offset: f64,
    pub ramp: usize,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            duration: 4.0,
            frame_rate: 10.0,
            history_frames: 10,
            num_actors: 24,
            spawn_extent: 30.0,
            sdv_speed: 0.0,
            map: true,
            class_ratios: ClassRatios::default(),
            maneuver_mix: ManeuverMix::default(),
            speeds: SpeedRanges::default(),
            sensor: SensorSpec::default(),
            label_noise: None,
            outliers: None,
        }
    }
}

/// Smallest and largest designed heading change of a turn, radians.
pub const TURN_MIN: f64 = std::f64::consts::FRAC_PI_3 + 0.05;
pub const TURN_MAX: f64 = FRAC_PI_2;

/// Nominal box (length, width, height) per class, meters.
pub fn nominal_extent(class: ActorClass) -> [f64; 3] {
    match class {
        ActorClass::Vehicle => [4.5, 2.0, 1.6],
        ActorClass::Pedestrian => [0.7, 0.7, 1.7],
        ActorClass::Bicyclist => [1.8, 0.7, 1.6],
    }
}

/// Relative jitter applied to the nominal length and width.
pub const EXTENT_JITTER: f64 = 0.1;

fn ratio_check(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("ratio must be finite and non-negative, got {v}")))
    }
}

/// Largest-remainder apportionment of `total` items over `weights`.
///
/// Ties in the remainder go to the lower index, so the result is exact and
/// deterministic.
pub fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

impl ScenarioSpec {
    pub fn num_frames(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::config("frame_rate", "must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", "must be positive"));
        }
        let frames = self.duration * self.frame_rate;
        if (frames - frames.round()).abs() > 1e-9 {
            return Err(Error::config(
                "duration",
                format!("duration x frame_rate = {frames} is not a whole number of frames"),
            ));
        }
        if self.history_frames == 0 || self.history_frames >= self.num_frames() {
            return Err(Error::config(
                "history_frames",
                format!("must lie in 1..{} so at least one future frame remains", self.num_frames()),
            ));
        }
        if !(self.spawn_extent > 0.0 && self.spawn_extent.is_finite()) {
            return Err(Error::config("spawn_extent", "must be positive"));
        }
        if !self.sdv_speed.is_finite() {
            return Err(Error::config("sdv_speed", "must be finite"));
        }
        for class in ActorClass::ALL {
            ratio_check(&format!("class_ratios.{class}"), self.class_ratios.get(class))?;
        }
        let ratio_sum: f64 = ActorClass::ALL.iter().map(|&c| self.class_ratios.get(c)).sum();
        if self.num_actors > 0 && ratio_sum <= 0.0 {
            return Err(Error::config("class_ratios", "at least one class ratio must be positive"));
        }
        let mix = &self.maneuver_mix;
        ratio_check("maneuver_mix.straight", mix.straight)?;
        ratio_check("maneuver_mix.left_turn", mix.left_turn)?;
        ratio_check("maneuver_mix.right_turn", mix.right_turn)?;
        if self.num_actors > 0 && mix.straight + mix.left_turn + mix.right_turn <= 0.0 {
            return Err(Error::config("maneuver_mix", "at least one maneuver share must be positive"));
        }
        let s = &self.sensor;
        if !(s.height.is_finite() && s.noise >= 0.0 && s.noise.is_finite() && s.clutter_extent > 0.0) {
            return Err(Error::config("sensor", "height, noise and clutter_extent must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&s.dropout) {
            return Err(Error::config("sensor.dropout", "must lie in [0, 1)"));
        }
        if let Some(n) = &self.label_noise {
            for (name, v) in [("alpha_at", n.alpha_at), ("beta_at", n.beta_at), ("alpha_ct", n.alpha_ct), ("beta_ct", n.beta_ct)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("label_noise.{name}"), format!("must be non-negative, got {v}")));
                }
            }
        }
        if let Some(o) = &self.outliers {
            if !(0.0..=1.0).contains(&o.fraction) {
                return Err(Error::config("outliers.fraction", "must lie in [0, 1]"));
            }
            if !o.offset.is_finite() {
                return Err(Error::config("outliers.offset", "must be finite"));
            }
        }
        let future_s = (self.num_frames() - self.history_frames) as f64 / self.frame_rate;
        let turning = mix.left_turn > 0.0 || mix.right_turn > 0.0;
        for class in ActorClass::ALL {
            let [lo, hi] = self.speeds.get(class);
            let field = format!("speeds.{class}");
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::config(field, format!("need 0 < min <= max, got [{lo}, {hi}]")));
            }
            if turning && self.class_ratios.get(class) > 0.0 {
                // tightest arc: slowest speed over the sharpest turn
                let radius = lo * future_s / TURN_MAX;
                let length = nominal_extent(class)[0] * (1.0 + EXTENT_JITTER);
                if radius < length {
                    return Err(Error::config(
                        field,
                        format!(
                            "turn radius {radius:.2} m at {lo} m/s is shorter than the {class} box length {length:.2} m"
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let w: Vec<f64> = ActorClass::ALL.iter().map(|&c| self.class_ratios.get(c)).collect();
        let c = apportion(self.num_actors, &w);
        [c[0], c[1], c[2]]
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Input(format!("scenario spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

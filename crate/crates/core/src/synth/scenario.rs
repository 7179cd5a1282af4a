use serde::{Deserialize, Serialize};

use super::rng::{streams, StreamRng};
use super::spec::{apportion, nominal_extent, ScenarioSpec, SensorSpec, EXTENT_JITTER, TURN_MAX, TURN_MIN};
use crate::class::ActorClass;
use crate::error::{Error, Result};
use crate::geometry::{OrientedBox, Pose2, Trajectory, Waypoint};
use crate::raster::{MapClass, MapElement, MapGeometry, SensorPose};

pub const SCENARIO_VERSION: &str = "scn-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Straight,
    LeftTurn,
    RightTurn,
}

impl Maneuver {
    pub const ALL: [Maneuver; 3] = [Maneuver::Straight, Maneuver::LeftTurn, Maneuver::RightTurn];

    /// Mode bin the maneuver is built to land in under a 3-way split.
    pub fn designed_mode(self) -> usize {
        match self {
            Maneuver::RightTurn => 0,
            Maneuver::Straight => 1,
            Maneuver::LeftTurn => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrack {
    pub id: u32,
    pub class: ActorClass,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub maneuver: Maneuver,
    /// `[x, y, heading]` per frame in the global frame; headings are
    /// continuous (not wrapped).
    pub poses: Vec<[f64; 3]>,
    /// Speed per frame, m/s.
    pub speeds: Vec<f64>,
    /// Noisy labels for the frames after the current one, if any were drawn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future_labels: Option<Vec<[f64; 3]>>,
}

impl ActorTrack {
    pub fn waypoint(&self, frame: usize) -> Waypoint {
        let [x, y, h] = self.poses[frame];
        Waypoint::new(x, y, h).expect("generated poses are finite")
    }

    pub fn bbox(&self, frame: usize) -> OrientedBox {
        let [x, y, h] = self.poses[frame];
        OrientedBox::new(x, y, self.length, self.width, h).expect("generated boxes are valid")
    }

    /// Ground-truth trajectory from `current` over the remaining frames.
    pub fn future(&self, current: usize, dt: f64) -> Trajectory {
        let wps = (current + 1..self.poses.len()).map(|f| self.waypoint(f)).collect();
        Trajectory::new(self.waypoint(current), wps, dt).expect("at least one future frame")
    }

    /// Future built from `future_labels` when present, else the clean track.
    pub fn labeled_future(&self, current: usize, dt: f64) -> Trajectory {
        match &self.future_labels {
            Some(labels) => {
                let wps = labels
                    .iter()
                    .map(|&[x, y, h]| Waypoint::new(x, y, h).expect("finite labels"))
                    .collect();
                Trajectory::new(self.waypoint(current), wps, dt).expect("at least one future frame")
            }
            None => self.future(current, dt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: String,
    pub seed: u64,
    pub frame_rate: f64,
    pub duration: f64,
    pub current_frame: usize,
    pub sensor: SensorSpec,
    pub actors: Vec<ActorTrack>,
    pub map: Vec<MapElement>,
    /// SDV `[x, y, heading]` per frame.
    pub sdv_track: Vec<[f64; 3]>,
    /// File name of the PTS1 sweep side-car, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<String>,
}

impl Scenario {
    pub fn num_frames(&self) -> usize {
        self.sdv_track.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Number of future waypoints after the current frame.
    pub fn horizon(&self) -> usize {
        self.num_frames() - self.current_frame - 1
    }

    pub fn sdv_pose(&self, frame: usize) -> Pose2 {
        let [x, y, h] = self.sdv_track[frame];
        Pose2::new(x, y, h)
    }

    pub fn sensor_pose(&self, frame: usize) -> SensorPose {
        let [x, y, yaw] = self.sdv_track[frame];
        SensorPose {
            x,
            y,
            yaw,
            z: self.sensor.height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::format("scn-1", format!("unsupported version `{}`", self.version)));
        }
        let n = self.num_frames();
        if n == 0 || self.current_frame + 1 >= n {
            return Err(Error::format("scn-1", "current frame must leave at least one future frame"));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::format("scn-1", "frame rate must be positive"));
        }
        for a in &self.actors {
            if a.poses.len() != n || a.speeds.len() != n {
                return Err(Error::format("scn-1", format!("actor {} has {} poses for {n} frames", a.id, a.poses.len())));
            }
            if let Some(l) = &a.future_labels {
                if l.len() != n - self.current_frame - 1 {
                    return Err(Error::format("scn-1", format!("actor {} future label count mismatch", a.id)));
                }
            }
        }
        Ok(())
    }
}

/// Position and heading `t` seconds after the turn onset for a constant
/// speed `v` and yaw rate `omega`.
fn advance(x0: f64, y0: f64, theta0: f64, v: f64, omega: f64, t: f64) -> [f64; 3] {
    if t <= 0.0 || omega == 0.0 {
        let (s, c) = theta0.sin_cos();
        return [x0 + v * t * c, y0 + v * t * s, theta0];
    }
    let theta = theta0 + omega * t;
    let r = v / omega;
    [
        x0 + r * (theta.sin() - theta0.sin()),
        y0 - r * (theta.cos() - theta0.cos()),
        theta,
    ]
}

struct Plan {
    class: ActorClass,
    maneuver: Maneuver,
}

fn plans(spec: &ScenarioSpec) -> Vec<Plan> {
    let counts = spec.class_counts();
    let mix = [spec.maneuver_mix.straight, spec.maneuver_mix.left_turn, spec.maneuver_mix.right_turn];
    let mut out = Vec::with_capacity(spec.num_actors);
    for class in ActorClass::ALL {
        let n = counts[class.index()];
        let m = apportion(n, &mix);
        for (maneuver, &k) in Maneuver::ALL.iter().zip(&m) {
            out.extend((0..k).map(|_| Plan { class, maneuver: *maneuver }));
        }
    }
    out
}

/// Builds a scenario from a validated spec. Every actor draws from its own
/// random stream, so adding actors never changes the existing ones.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let frames = spec.num_frames();
    let current = spec.history_frames - 1;
    let dt = 1.0 / spec.frame_rate;
    let future_s = (frames - 1 - current) as f64 * dt;

    let sdv_track: Vec<[f64; 3]> = (0..frames)
        .map(|f| [spec.sdv_speed * (f as f64 - current as f64) * dt, 0.0, 0.0])
        .collect();

    let mut actors: Vec<ActorTrack> = Vec::with_capacity(spec.num_actors);
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    for (i, plan) in plans(spec).into_iter().enumerate() {
        let mut rng = StreamRng::new(spec.seed, streams::ACTORS, 0, i as u64);
        let [nl, nw, nh] = nominal_extent(plan.class);
        let (length, width) = if plan.class == ActorClass::Pedestrian {
            (nl, nw)
        } else {
            (
                nl * rng.range(1.0 - EXTENT_JITTER, 1.0 + EXTENT_JITTER),
                nw * rng.range(1.0 - EXTENT_JITTER, 1.0 + EXTENT_JITTER),
            )
        };
        let [vlo, vhi] = spec.speeds.get(plan.class);
        let speed = rng.range(vlo, vhi);
        let delta = match plan.maneuver {
            Maneuver::Straight => 0.0,
            Maneuver::LeftTurn => rng.range(TURN_MIN, TURN_MAX),
            Maneuver::RightTurn => -rng.range(TURN_MIN, TURN_MAX),
        };
        let heading0 = rng.range(-std::f64::consts::PI, std::f64::consts::PI);
        let radius = 0.5 * length.hypot(width);
        // rejection sampling for a free spot at the current frame
        let mut pos = (0.0, 0.0);
        for attempt in 0..64 {
            pos = (
                rng.range(-spec.spawn_extent, spec.spawn_extent),
                rng.range(-spec.spawn_extent, spec.spawn_extent),
            );
            let clear_sdv = pos.0.hypot(pos.1) > radius + 4.0;
            let clear = placed
                .iter()
                .all(|&(x, y, r)| (x - pos.0).hypot(y - pos.1) > r + radius + 1.0);
            if (clear && clear_sdv) || attempt == 63 {
                break;
            }
        }
        placed.push((pos.0, pos.1, radius));
        let sdv0 = sdv_track[current];
        let (x0, y0) = (pos.0 + sdv0[0], pos.1 + sdv0[1]);
        let omega = delta / future_s;
        let poses: Vec<[f64; 3]> = (0..frames)
            .map(|f| advance(x0, y0, heading0, speed, omega, (f as f64 - current as f64) * dt))
            .collect();
        actors.push(ActorTrack {
            id: i as u32,
            class: plan.class,
            length,
            width,
            height: nh,
            maneuver: plan.maneuver,
            poses,
            speeds: vec![speed; frames],
            future_labels: None,
        });
    }

    let map = if spec.map { build_map(spec, &actors, current) } else { Vec::new() };
    let mut scenario = Scenario {
        version: SCENARIO_VERSION.to_string(),
        seed: spec.seed,
        frame_rate: spec.frame_rate,
        duration: spec.duration,
        current_frame: current,
        sensor: spec.sensor,
        actors,
        map,
        sdv_track,
        sweeps: None,
    };
    if let Some(schedule) = &spec.label_noise {
        super::noise::apply_label_noise(&mut scenario, schedule, 0)?;
    }
    if let Some(o) = spec.outliers {
        super::noise::inject_outliers(&mut scenario, o.fraction, o.offset, o.ramp, 0);
    }
    Ok(scenario)
}

fn offset_line(points: &[[f64; 3]], offset: f64) -> Vec<[f64; 2]> {
    points
        .iter()
        .map(|&[x, y, h]| {
            let (s, c) = h.sin_cos();
            [x - offset * s, y + offset * c]
        })
        .collect()
}

fn square(cx: f64, cy: f64, heading: f64, half: f64) -> Vec<[f64; 2]> {
    OrientedBox::new(cx, cy, 2.0 * half, 2.0 * half, heading)
        .expect("finite square")
        .corners()
        .to_vec()
}

/// Routes along each actor's full track (driving path for vehicles and
/// bicyclists, with lane and road boundaries), an intersection patch at each
/// actor's current position and a few decorative elements.
fn build_map(spec: &ScenarioSpec, actors: &[ActorTrack], current: usize) -> Vec<MapElement> {
    let mut out = Vec::new();
    for a in actors {
        let route: Vec<[f64; 3]> = a
            .poses
            .iter()
            .enumerate()
            .filter(|(f, _)| f % 3 == 0 || *f == a.poses.len() - 1)
            .map(|(_, p)| *p)
            .collect();
        let [x, y, h] = a.poses[current];
        if a.class == ActorClass::Pedestrian {
            out.push(MapElement {
                class: MapClass::Crosswalk,
                geometry: MapGeometry::Polygon { points: square(x, y, h, 2.0) },
            });
            continue;
        }
        let half = 0.5 * a.width + 0.5;
        out.push(MapElement {
            class: MapClass::DrivingPath,
            geometry: MapGeometry::Polyline {
                points: offset_line(&route, 0.0),
                width: 2.0 * half,
            },
        });
        for side in [-1.0, 1.0] {
            out.push(MapElement {
                class: MapClass::LaneBoundary,
                geometry: MapGeometry::Polyline {
                    points: offset_line(&route, side * (half + 0.3)),
                    width: 0.2,
                },
            });
            out.push(MapElement {
                class: MapClass::RoadBoundary,
                geometry: MapGeometry::Polyline {
                    points: offset_line(&route, side * (half + 3.5)),
                    width: 0.3,
                },
            });
        }
        out.push(MapElement {
            class: MapClass::Intersection,
            geometry: MapGeometry::Polygon { points: square(x, y, h, 4.0) },
        });
    }
    let mut rng = StreamRng::new(spec.seed, streams::MAP, 0, 0);
    let e = spec.spawn_extent;
    for class in [MapClass::Driveway, MapClass::ParkingLot] {
        let (cx, cy, h) = (rng.range(-e, e), rng.range(-e, e), rng.range(-3.0, 3.0));
        let half = if class == MapClass::Driveway { 2.0 } else { 6.0 };
        out.push(MapElement {
            class,
            geometry: MapGeometry::Polygon { points: square(cx, cy, h, half) },
        });
    }
    out
}

use super::rng::{streams, StreamRng};
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::raster::LidarSweep;

/// Parameters of the lidar simulator; [`Scenario::sensor`] supplies defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepParams {
    pub points_per_actor: usize,
    pub clutter_points: usize,
    pub clutter_extent: f64,
    pub noise: f64,
    pub dropout: f64,
}

impl SweepParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            points_per_actor: s.sensor.points_per_actor,
            clutter_points: s.sensor.clutter_points,
            clutter_extent: s.sensor.clutter_extent,
            noise: s.sensor.noise,
            dropout: s.sensor.dropout,
        }
    }
}

/// Entity key of the clutter stream (actor ids are smaller).
const CLUTTER_ENTITY: u64 = u64::MAX;

/// Samples one sweep at `frame`: returns on the sensor-facing sides of every
/// actor box, spread over the actor's height, plus ground clutter.
///
/// Points are expressed in the sensor frame. Each actor and the clutter use
/// their own random stream keyed by `(seed, stream, frame, actor)`.
pub fn simulate_sweep(scenario: &Scenario, frame: usize, params: &SweepParams, stream: u64) -> Result<LidarSweep> {
    if frame >= scenario.num_frames() {
        return Err(Error::InvalidArgument(format!(
            "frame {frame} out of range (scenario has {} frames)",
            scenario.num_frames()
        )));
    }
    let pose = scenario.sensor_pose(frame);
    let sensor = scenario.sdv_pose(frame);
    let ground_z = -pose.z;
    let mut points: Vec<[f32; 3]> = Vec::new();
    for actor in &scenario.actors {
        let mut rng = StreamRng::new(scenario.seed ^ stream, streams::SWEEPS, frame as u64, actor.id as u64);
        let corners = actor.bbox(frame).corners();
        // outward normals of a counter-clockwise polygon point right of each edge
        let mut edges = Vec::with_capacity(4);
        for i in 0..4 {
            let a = corners[i];
            let b = corners[(i + 1) % 4];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len = dx.hypot(dy);
            let n = [dy / len, -dx / len];
            let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
            let facing = (sensor.x - mid[0]) * n[0] + (sensor.y - mid[1]) * n[1] > 0.0;
            edges.push((a, [dx, dy], len, n, facing));
        }
        if !edges.iter().any(|e| e.4) {
            edges.iter_mut().for_each(|e| e.4 = true);
        }
        let total: f64 = edges.iter().filter(|e| e.4).map(|e| e.2).sum();
        for _ in 0..params.points_per_actor {
            let mut s = rng.uniform() * total;
            let noise = params.noise * (2.0 * rng.uniform() - 1.0);
            let z = ground_z + actor.height * rng.uniform();
            let keep = rng.uniform() >= params.dropout;
            let mut chosen = edges.iter().rfind(|e| e.4).unwrap();
            for e in edges.iter().filter(|e| e.4) {
                if s < e.2 {
                    chosen = e;
                    break;
                }
                s -= e.2;
            }
            let (a, d, len, n, _) = *chosen;
            let f = (s / len).min(1.0);
            let world = [a[0] + f * d[0] + noise * n[0], a[1] + f * d[1] + noise * n[1]];
            if keep {
                let local = sensor.to_local(world);
                points.push([local[0] as f32, local[1] as f32, z as f32]);
            }
        }
    }
    let mut rng = StreamRng::new(scenario.seed ^ stream, streams::SWEEPS, frame as u64, CLUTTER_ENTITY);
    for _ in 0..params.clutter_points {
        let x = rng.range(-params.clutter_extent, params.clutter_extent);
        let y = rng.range(-params.clutter_extent, params.clutter_extent);
        let z = ground_z + 0.3 * rng.uniform();
        let keep = rng.uniform() >= params.dropout;
        if keep {
            points.push([x as f32, y as f32, z as f32]);
        }
    }
    Ok(LidarSweep {
        timestamp: frame as f64 / scenario.frame_rate,
        points,
        pose,
    })
}

/// Sweeps for every frame of the scenario with its own sensor settings.
pub fn simulate_all_sweeps(scenario: &Scenario) -> Result<Vec<LidarSweep>> {
    let params = SweepParams::from_scenario(scenario);
    (0..scenario.num_frames())
        .map(|f| simulate_sweep(scenario, f, &params, 0))
        .collect()
}

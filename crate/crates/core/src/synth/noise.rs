use super::rng::{streams, StreamRng};
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::losses::{Axis, DiversitySchedule};

/// Draws noisy future labels for every actor: at horizon `h` (time `h·dt`)
/// the true position moves by independent `Laplace(0, b_AT(t))` along the
/// true heading and `Laplace(0, b_CT(t))` to its left. Headings are kept.
///
/// Returns one label list per actor, covering the frames after the current one.
pub fn perturb_labels(scenario: &Scenario, schedule: &DiversitySchedule, stream: u64) -> Result<Vec<Vec<[f64; 3]>>> {
    schedule_ok(schedule)?;
    let dt = scenario.dt();
    let current = scenario.current_frame;
    Ok(scenario
        .actors
        .iter()
        .map(|a| {
            (current + 1..scenario.num_frames())
                .map(|f| {
                    let h = f - current;
                    let mut rng = StreamRng::new(scenario.seed ^ stream, streams::LABEL_NOISE, f as u64, a.id as u64);
                    let t = h as f64 * dt;
                    let e_at = rng.laplace(schedule.at(t, Axis::AlongTrack));
                    let e_ct = rng.laplace(schedule.at(t, Axis::CrossTrack));
                    let [x, y, heading] = a.poses[f];
                    let (s, c) = heading.sin_cos();
                    [x + e_at * c - e_ct * s, y + e_at * s + e_ct * c, heading]
                })
                .collect()
        })
        .collect())
}

/// Zero coefficients are allowed here so that a zero schedule reproduces the
/// clean tracks.
fn schedule_ok(s: &DiversitySchedule) -> Result<()> {
    for (name, v) in [("alpha_at", s.alpha_at), ("beta_at", s.beta_at), ("alpha_ct", s.alpha_ct), ("beta_ct", s.beta_ct)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::config(name, format!("must be non-negative, got {v}")));
        }
    }
    Ok(())
}

/// [`perturb_labels`] stored into each actor's `future_labels`.
pub fn apply_label_noise(scenario: &mut Scenario, schedule: &DiversitySchedule, stream: u64) -> Result<()> {
    let labels = perturb_labels(scenario, schedule, stream)?;
    for (a, l) in scenario.actors.iter_mut().zip(labels) {
        a.future_labels = Some(l);
    }
    Ok(())
}

/// Shifts the future labels of a random `fraction` of actors sideways by
/// `offset` meters (positive = left of the true heading), ramping in over the
/// first `ramp` waypoints, as a lane-snapping annotation error would.
///
/// Works on `future_labels` if present, else starts from the clean track.
/// Returns the ids of the affected actors.
pub fn inject_outliers(scenario: &mut Scenario, fraction: f64, offset: f64, ramp: usize, stream: u64) -> Vec<u32> {
    let current = scenario.current_frame;
    let n = scenario.num_frames();
    let seed = scenario.seed ^ stream;
    let mut hit = Vec::new();
    for a in &mut scenario.actors {
        let mut rng = StreamRng::new(seed, streams::OUTLIERS, 0, a.id as u64);
        if rng.uniform() >= fraction {
            continue;
        }
        hit.push(a.id);
        let mut labels = a.future_labels.take().unwrap_or_else(|| a.poses[current + 1..n].to_vec());
        for (i, l) in labels.iter_mut().enumerate() {
            let w = ((i + 1) as f64 / ramp.max(1) as f64).min(1.0);
            let heading = a.poses[current + 1 + i][2];
            let (s, c) = heading.sin_cos();
            l[0] -= w * offset * s;
            l[1] += w * offset * c;
        }
        a.future_labels = Some(labels);
    }
    hit
}

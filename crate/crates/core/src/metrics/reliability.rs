use super::MultimodalPrediction;
use crate::geometry::{decompose_at_ct, Trajectory};

pub const NUM_LEVELS: usize = 19;

/// Nominal coverage levels 0.05, 0.10, ..., 0.95.
pub fn default_levels() -> Vec<f64> {
    (1..=NUM_LEVELS).map(|k| k as f64 / 20.0).collect()
}

/// Half-width of the centered interval holding mass `q` of `Laplace(0, b)`.
pub fn laplace_half_width(b: f64, q: f64) -> f64 {
    b * (1.0 / (1.0 - q)).ln()
}

/// `(nominal, empirical)` pairs: the empirical value is the fraction of
/// errors inside the nominal-level interval of their own predicted scale.
pub fn coverage_curve(errors: &[f64], scales: &[f64], levels: &[f64]) -> Vec<(f64, f64)> {
    assert_eq!(errors.len(), scales.len(), "one scale per error");
    levels
        .iter()
        .map(|&q| {
            if errors.is_empty() {
                return (q, 0.0);
            }
            let inside = errors
                .iter()
                .zip(scales)
                .filter(|(e, b)| e.abs() <= laplace_half_width(**b, q))
                .count();
            (q, inside as f64 / errors.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityCurves {
    pub along_track: Vec<(f64, f64)>,
    pub cross_track: Vec<(f64, f64)>,
    pub count: usize,
}

impl ReliabilityCurves {
    /// Largest `|empirical - nominal|` over both axes.
    pub fn max_deviation(&self) -> f64 {
        self.along_track
            .iter()
            .chain(&self.cross_track)
            .map(|(n, e)| (e - n).abs())
            .fold(0.0, f64::max)
    }
}

/// Coverage of the most probable mode's Laplace intervals at `horizon`.
///
/// Pairs whose selected mode carries no diversities are skipped; `None`
/// if nothing remains.
pub fn reliability_diagram(
    pairs: &[(&MultimodalPrediction, &Trajectory)],
    horizon: usize,
    levels: &[f64],
) -> Option<ReliabilityCurves> {
    let mut at = (Vec::new(), Vec::new());
    let mut ct = (Vec::new(), Vec::new());
    for (pred, truth) in pairs {
        let mode = &pred.modes[pred.highest_prob_index()];
        let (Some(dist), Some(p), Some(t)) = (&mode.distribution, mode.trajectory.at(horizon), truth.at(horizon))
        else {
            continue;
        };
        if horizon == 0 {
            continue;
        }
        let e = decompose_at_ct(p, t);
        at.0.push(e.at);
        at.1.push(dist.b_at[horizon - 1]);
        ct.0.push(e.ct);
        ct.1.push(dist.b_ct[horizon - 1]);
    }
    if at.0.is_empty() {
        return None;
    }
    Some(ReliabilityCurves {
        along_track: coverage_curve(&at.0, &at.1, levels),
        cross_track: coverage_curve(&ct.0, &ct.1, levels),
        count: at.0.len(),
    })
}

use super::MultimodalPrediction;
use crate::error::{Error, Result};
use crate::geometry::{decompose_at_ct, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    /// Mean displacement error in centimeters.
    pub de_cm: f64,
    /// Mean absolute cross-track error in centimeters.
    pub ct_cm: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionErrors {
    pub horizon: usize,
    pub highest_prob: ErrorSummary,
    pub min_over_m: ErrorSummary,
    /// Mean highest-probability displacement error (cm) at horizons `1..=H`.
    pub de_curve_cm: Vec<f64>,
}

fn errors_at(pred: &MultimodalPrediction, truth: &Trajectory, mode: usize, h: usize) -> (f64, f64) {
    let p = pred.modes[mode].trajectory.at(h).expect("horizon checked");
    let t = truth.at(h).expect("horizon checked");
    (p.distance(t), decompose_at_ct(p, t).ct.abs())
}

/// DE and CT at waypoint `horizon` (1-based) over matched actors, for the
/// most probable mode and for the per-actor best mode.
///
/// `None` when `pairs` is empty.
pub fn prediction_errors(
    pairs: &[(&MultimodalPrediction, &Trajectory)],
    horizon: usize,
) -> Result<Option<PredictionErrors>> {
    if pairs.is_empty() {
        return Ok(None);
    }
    let max_h = pairs
        .iter()
        .flat_map(|(p, t)| p.modes.iter().map(|m| m.trajectory.horizon()).chain([t.horizon()]))
        .min()
        .unwrap_or(0);
    if horizon == 0 || horizon > max_h {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} outside trajectory length {max_h}"
        )));
    }
    let mut hp = (0.0, 0.0);
    let mut mm = (0.0, 0.0);
    for (pred, truth) in pairs {
        let (de, ct) = errors_at(pred, truth, pred.highest_prob_index(), horizon);
        hp.0 += de;
        hp.1 += ct;
        let mut best = errors_at(pred, truth, 0, horizon);
        for k in 1..pred.modes.len() {
            let e = errors_at(pred, truth, k, horizon);
            if e.0 < best.0 {
                best = e;
            }
        }
        mm.0 += best.0;
        mm.1 += best.1;
    }
    let n = pairs.len() as f64;
    let summary = |(de, ct): (f64, f64)| ErrorSummary {
        de_cm: 100.0 * de / n,
        ct_cm: 100.0 * ct / n,
        count: pairs.len(),
    };
    let de_curve_cm = (1..=max_h)
        .map(|h| {
            let total: f64 = pairs
                .iter()
                .map(|(p, t)| errors_at(p, t, p.highest_prob_index(), h).0)
                .sum();
            100.0 * total / n
        })
        .collect();
    Ok(Some(PredictionErrors {
        horizon,
        highest_prob: summary(hp),
        min_over_m: summary(mm),
        de_curve_cm,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Waypoint;
    use crate::metrics::PredictedMode;

    fn straight(offset_y: f64) -> Trajectory {
        let origin = Waypoint::new(0.0, offset_y, 0.0).unwrap();
        let wps = (1..=30).map(|h| Waypoint::new(h as f64, offset_y, 0.0).unwrap()).collect();
        Trajectory::new(origin, wps, 0.1).unwrap()
    }

    fn mode(t: Trajectory, p: f64) -> PredictedMode {
        PredictedMode {
            trajectory: t,
            distribution: None,
            probability: p,
        }
    }

    #[test]
    fn perfect_trajectories_zero_error() {
        let truth = straight(0.0);
        let pred = MultimodalPrediction::new(vec![mode(truth.clone(), 1.0)]).unwrap();
        let e = prediction_errors(&[(&pred, &truth)], 30).unwrap().unwrap();
        assert_eq!(e.highest_prob.de_cm, 0.0);
        assert_eq!(e.min_over_m.ct_cm, 0.0);
        assert_eq!(e.de_curve_cm.len(), 30);
    }

    #[test]
    fn lateral_mode_offset() {
        let truth = straight(0.0);
        let pred = MultimodalPrediction::new(vec![mode(straight(0.5), 0.9), mode(truth.clone(), 0.1)]).unwrap();
        let e = prediction_errors(&[(&pred, &truth)], 30).unwrap().unwrap();
        assert!((e.highest_prob.de_cm - 50.0).abs() < 1e-12);
        assert!((e.highest_prob.ct_cm - 50.0).abs() < 1e-12);
        assert_eq!(e.min_over_m.de_cm, 0.0);
    }

    #[test]
    fn ties_prefer_lower_mode() {
        let truth = straight(0.0);
        let pred = MultimodalPrediction::new(vec![
            mode(straight(0.5), 0.5),
            mode(straight(-0.5), 0.5),
        ])
        .unwrap();
        assert_eq!(pred.highest_prob_index(), 0);
        let e = prediction_errors(&[(&pred, &truth)], 5).unwrap().unwrap();
        assert!((e.min_over_m.de_cm - 50.0).abs() < 1e-12);
    }

    #[test]
    fn empty_and_bad_horizon() {
        assert!(prediction_errors(&[], 30).unwrap().is_none());
        let truth = straight(0.0);
        let pred = MultimodalPrediction::new(vec![mode(truth.clone(), 1.0)]).unwrap();
        assert!(prediction_errors(&[(&pred, &truth)], 31).is_err());
        assert!(prediction_errors(&[(&pred, &truth)], 0).is_err());
    }
}

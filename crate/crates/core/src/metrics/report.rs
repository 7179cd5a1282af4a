use std::fmt::Write as _;

use rayon::prelude::*;

use super::{
    average_precision, match_detections, operating_threshold, prediction_errors, reliability_diagram, Detection,
    LabeledActor, MultimodalPrediction, OperatingPoint, PredictionErrors, ReliabilityCurves, ScoredOutcome,
};
use crate::class::ActorClass;
use crate::error::Result;
use crate::geometry::Trajectory;

pub const REPORT_CSV_HEADER: &str = "class,variant,ap,threshold,recall_reached,num_tp,de_cm,ct_cm";
pub const RELIABILITY_CSV_HEADER: &str = "class,axis,nominal,empirical";

/// Detections and labels of one evaluated frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameEval {
    pub detections: Vec<Detection>,
    pub labels: Vec<LabeledActor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    HighestProb,
    MinOverM,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::HighestProb, Variant::MinOverM];

    pub fn name(self) -> &'static str {
        match self {
            Variant::HighestProb => "highest_prob",
            Variant::MinOverM => "min_over_m",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: ActorClass,
    pub num_labels: usize,
    pub num_detections: usize,
    pub ap: Option<f64>,
    pub operating_point: Option<OperatingPoint>,
    /// True positives scoring at or above the operating threshold.
    pub num_tp: usize,
    pub errors: Option<PredictionErrors>,
    pub reliability: Option<ReliabilityCurves>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub horizon: usize,
    pub classes: Vec<ClassReport>,
}

struct FrameMatches {
    outcomes: Vec<(ActorClass, ScoredOutcome)>,
    /// `(class, score, frame-local detection index, label index)`
    pairs: Vec<(ActorClass, f64, usize, usize)>,
    labels: [usize; 3],
}

fn match_frame(frame: &FrameEval) -> FrameMatches {
    let mut out = FrameMatches {
        outcomes: Vec::new(),
        pairs: Vec::new(),
        labels: [0; 3],
    };
    for class in ActorClass::ALL {
        let det_idx: Vec<usize> = (0..frame.detections.len())
            .filter(|&i| frame.detections[i].class == class)
            .collect();
        let lab_idx: Vec<usize> = (0..frame.labels.len()).filter(|&i| frame.labels[i].class == class).collect();
        out.labels[class.index()] = lab_idx.len();
        let dets: Vec<Detection> = det_idx.iter().map(|&i| frame.detections[i].clone()).collect();
        let labs: Vec<LabeledActor> = lab_idx.iter().map(|&i| frame.labels[i].clone()).collect();
        let m = match_detections(&dets, &labs, class.iou_threshold());
        for &(d, l, _) in &m.true_positives {
            out.outcomes.push((class, ScoredOutcome { score: dets[d].score, is_tp: true }));
            out.pairs.push((class, dets[d].score, det_idx[d], lab_idx[l]));
        }
        for &d in &m.false_positives {
            out.outcomes.push((class, ScoredOutcome { score: dets[d].score, is_tp: false }));
        }
    }
    out
}

/// Runs matching, AP, the recall operating point, prediction errors and
/// reliability curves for every class.
///
/// Frames are matched in parallel on the current rayon pool; results are
/// merged in frame order so the report does not depend on the thread count.
pub fn evaluate_frames(
    frames: &[FrameEval],
    horizon: usize,
    target_recall: f64,
    levels: &[f64],
) -> Result<EvalReport> {
    let matched: Vec<FrameMatches> = frames.par_iter().map(match_frame).collect();
    let mut classes = Vec::new();
    for class in ActorClass::ALL {
        let num_labels: usize = matched.iter().map(|m| m.labels[class.index()]).sum();
        let outcomes: Vec<ScoredOutcome> = matched
            .iter()
            .flat_map(|m| m.outcomes.iter().filter(|(c, _)| *c == class).map(|(_, o)| *o))
            .collect();
        let ap = average_precision(&outcomes, num_labels);
        let op = operating_threshold(&outcomes, num_labels, target_recall);
        let mut pairs: Vec<(&MultimodalPrediction, &Trajectory)> = Vec::new();
        if let Some(op) = op {
            for (frame, m) in frames.iter().zip(&matched) {
                for &(c, score, d, l) in &m.pairs {
                    if c == class && score >= op.threshold {
                        pairs.push((&frame.detections[d].prediction, &frame.labels[l].future));
                    }
                }
            }
        }
        classes.push(ClassReport {
            class,
            num_labels,
            num_detections: outcomes.len(),
            ap,
            operating_point: op,
            num_tp: pairs.len(),
            errors: prediction_errors(&pairs, horizon)?,
            reliability: reliability_diagram(&pairs, horizon, levels),
        });
    }
    Ok(EvalReport { horizon, classes })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ClassReport {
    pub fn variant(&self, v: Variant) -> Option<super::ErrorSummary> {
        self.errors.as_ref().map(|e| match v {
            Variant::HighestProb => e.highest_prob,
            Variant::MinOverM => e.min_over_m,
        })
    }
}

impl EvalReport {
    pub fn class(&self, class: ActorClass) -> &ClassReport {
        &self.classes[class.index()]
    }

    /// One row per class and variant under [`REPORT_CSV_HEADER`]; absent
    /// metrics are empty fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_CSV_HEADER);
        s.push('\n');
        for c in &self.classes {
            for v in Variant::ALL {
                let e = c.variant(v);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    c.class,
                    v.name(),
                    opt(c.ap),
                    opt(c.operating_point.map(|o| o.threshold)),
                    c.operating_point.map(|o| o.reached.to_string()).unwrap_or_default(),
                    c.num_tp,
                    opt(e.map(|e| e.de_cm)),
                    opt(e.map(|e| e.ct_cm)),
                );
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>, prec: usize| v.map(|x| format!("{x:.prec$}")).unwrap_or_else(|| "-".into());
        let mut s = format!(
            "{:<11} {:<13} {:>7} {:>9} {:>7} {:>9} {:>9}\n",
            "class", "variant", "AP", "thresh", "TP", "DE(cm)", "CT(cm)"
        );
        for c in &self.classes {
            for v in Variant::ALL {
                let e = c.variant(v);
                let thresh = match c.operating_point {
                    Some(o) if !o.reached => format!("{:.3}*", o.threshold),
                    Some(o) => format!("{:.3}", o.threshold),
                    None => "-".into(),
                };
                let _ = writeln!(
                    s,
                    "{:<11} {:<13} {:>7} {:>9} {:>7} {:>9} {:>9}",
                    c.class.name(),
                    v.name(),
                    fmt(c.ap.map(|a| 100.0 * a), 2),
                    thresh,
                    c.num_tp,
                    fmt(e.map(|e| e.de_cm), 1),
                    fmt(e.map(|e| e.ct_cm), 1),
                );
            }
        }
        if self.classes.iter().any(|c| c.operating_point.is_some_and(|o| !o.reached)) {
            s.push_str("* target recall not reached; lowest score used\n");
        }
        let curves: Vec<_> = self
            .classes
            .iter()
            .filter_map(|c| c.errors.as_ref().map(|e| (c.class, &e.de_curve_cm)))
            .collect();
        if !curves.is_empty() {
            s.push_str("\nhighest_prob DE(cm) by waypoint\n");
            for (class, curve) in curves {
                let values: Vec<String> = curve.iter().map(|v| format!("{v:.1}")).collect();
                let _ = writeln!(s, "{:<11} {}", class.name(), values.join(" "));
            }
        }
        s
    }

    /// `class,axis,nominal,empirical` rows for every class with curves.
    pub fn reliability_csv(&self) -> String {
        let mut s = String::from(RELIABILITY_CSV_HEADER);
        s.push('\n');
        for c in &self.classes {
            if let Some(r) = &c.reliability {
                for (axis, curve) in [("at", &r.along_track), ("ct", &r.cross_track)] {
                    for (n, e) in curve {
                        let _ = writeln!(s, "{},{axis},{n},{e}", c.class);
                    }
                }
            }
        }
        s
    }
}

/// Reliability diagram as a standalone SVG line plot with the identity
/// diagonal for reference.
pub fn reliability_svg(title: &str, curve: &[(f64, f64)]) -> String {
    const SIZE: f64 = 320.0;
    const PAD: f64 = 40.0;
    let px = |v: f64| PAD + v * (SIZE - 2.0 * PAD);
    let py = |v: f64| SIZE - PAD - v * (SIZE - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"  <rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"  <text x="{}" y="20" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"  <rect x="{PAD}" y="{PAD}" width="{w}" height="{w}" fill="none" stroke="black"/>"#,
        w = SIZE - 2.0 * PAD
    );
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{v}</text>"#,
            px(v),
            SIZE - PAD + 14.0
        );
        let _ = writeln!(
            s,
            r#"  <text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="end">{v}</text>"#,
            PAD - 4.0,
            py(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4 3"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let points: Vec<String> = curve.iter().map(|&(n, e)| format!("{:.2},{:.2}", px(n), py(e))).collect();
    let _ = writeln!(
        s,
        r#"  <polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
        points.join(" ")
    );
    let _ = writeln!(
        s,
        r#"  <text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">nominal coverage</text>"#,
        SIZE / 2.0,
        SIZE - 8.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="12" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 12 {})">empirical coverage</text>"#,
        SIZE / 2.0,
        SIZE / 2.0
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

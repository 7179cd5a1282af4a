/// A detection's score and whether it was matched to a label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredOutcome {
    pub score: f64,
    pub is_tp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub recall: f64,
    /// False when no threshold reaches the target recall; `threshold` is then
    /// the lowest score present.
    pub reached: bool,
}

/// Cumulative (score, recall, precision) after each group of tied scores,
/// highest score first.
fn pr_steps(outcomes: &[ScoredOutcome], num_labels: usize) -> Vec<(f64, f64, f64)> {
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].score;
        while i < sorted.len() && sorted[i].score == score {
            if sorted[i].is_tp {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((score, tp as f64 / num_labels as f64, tp as f64 / (tp + fp) as f64));
    }
    steps
}

/// All-points interpolated AP: area under the precision envelope of the
/// precision/recall curve. Detections with equal scores enter together.
/// `None` when there are no labels.
pub fn average_precision(outcomes: &[ScoredOutcome], num_labels: usize) -> Option<f64> {
    if num_labels == 0 {
        return None;
    }
    let steps = pr_steps(outcomes, num_labels);
    let mut envelope: Vec<f64> = steps.iter().map(|s| s.2).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (step, prec) in steps.iter().zip(&envelope) {
        if step.1 > prev_recall {
            ap += (step.1 - prev_recall) * prec;
            prev_recall = step.1;
        }
    }
    Some(ap)
}

/// Highest score threshold whose recall reaches `target_recall`.
pub fn operating_threshold(outcomes: &[ScoredOutcome], num_labels: usize, target_recall: f64) -> Option<OperatingPoint> {
    if num_labels == 0 || outcomes.is_empty() {
        return None;
    }
    let steps = pr_steps(outcomes, num_labels);
    if let Some(&(threshold, recall, _)) = steps.iter().find(|s| s.1 >= target_recall) {
        return Some(OperatingPoint {
            threshold,
            recall,
            reached: true,
        });
    }
    let &(threshold, recall, _) = steps.last().unwrap();
    Some(OperatingPoint {
        threshold,
        recall,
        reached: false,
    })
}

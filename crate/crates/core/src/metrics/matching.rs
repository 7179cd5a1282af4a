use super::{Detection, LabeledActor};
use crate::geometry::{rotated_iou, OrientedBox};

/// Result of matching one frame's detections of a single class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// `(detection index, label index, IoU)` in matching order.
    pub true_positives: Vec<(usize, usize, f64)>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

/// Greedy matching in descending score order.
///
/// Each detection takes the unmatched label with the highest IoU (lowest
/// index on ties) if that IoU reaches `iou_threshold`. Equal scores keep
/// input order.
pub fn match_boxes(dets: &[OrientedBox], scores: &[f64], labels: &[OrientedBox], iou_threshold: f64) -> Matching {
    assert_eq!(dets.len(), scores.len(), "one score per detection");
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut taken = vec![false; labels.len()];
    let mut out = Matching::default();
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (l, label) in labels.iter().enumerate() {
            if taken[l] {
                continue;
            }
            let iou = rotated_iou(&dets[d], label);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((l, iou));
            }
        }
        match best {
            Some((l, iou)) if iou >= iou_threshold && iou > 0.0 => {
                taken[l] = true;
                out.true_positives.push((d, l, iou));
            }
            _ => out.false_positives.push(d),
        }
    }
    out.false_negatives = (0..labels.len()).filter(|&l| !taken[l]).collect();
    out
}

/// [`match_boxes`] over detections and labels of one class.
pub fn match_detections(dets: &[Detection], labels: &[LabeledActor], iou_threshold: f64) -> Matching {
    let boxes: Vec<OrientedBox> = dets.iter().map(|d| d.bbox).collect();
    let scores: Vec<f64> = dets.iter().map(|d| d.score).collect();
    let label_boxes: Vec<OrientedBox> = labels.iter().map(|l| l.bbox).collect();
    match_boxes(&boxes, &scores, &label_boxes, iou_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(cx: f64, cy: f64) -> OrientedBox {
        OrientedBox::new(cx, cy, 4.0, 2.0, 0.0).unwrap()
    }

    #[test]
    fn perfect_detections_all_match() {
        let labels = vec![b(0.0, 0.0), b(10.0, 0.0), b(0.0, 10.0)];
        let m = match_boxes(&labels, &[0.2, 0.9, 0.5], &labels, 0.7);
        assert_eq!(m.true_positives.len(), 3);
        assert!(m.false_positives.is_empty() && m.false_negatives.is_empty());
        assert!(m.true_positives.iter().all(|&(d, l, iou)| d == l && iou == 1.0));
    }

    #[test]
    fn overlap_two_labels_takes_higher_iou() {
        // labels at x = 0 and x = 3; detection at x = 1 overlaps both, more of the first
        let labels = vec![b(0.0, 0.0), b(3.0, 0.0)];
        let det = b(1.0, 0.0);
        let m = match_boxes(&[det], &[0.8], &labels, 0.1);
        assert_eq!(m.true_positives.len(), 1);
        assert_eq!(m.true_positives[0].1, 0);
        assert_eq!(m.false_negatives, vec![1]);
        // IoU oracle for axis-aligned overlaps: (4 - dx) * 2 / (16 - (4 - dx) * 2)
        assert!((m.true_positives[0].2 - 6.0 / 10.0).abs() < 1e-12);
    }

    #[test]
    fn empty_labels_all_false_positive() {
        let m = match_boxes(&[b(0.0, 0.0), b(1.0, 1.0)], &[0.4, 0.6], &[], 0.5);
        assert_eq!(m.false_positives, vec![1, 0]);
        assert!(m.true_positives.is_empty());
    }

    #[test]
    fn higher_score_wins_contested_label() {
        let labels = vec![b(0.0, 0.0)];
        let m = match_boxes(&[b(0.5, 0.0), b(0.0, 0.0)], &[0.9, 0.3], &labels, 0.5);
        assert_eq!(m.true_positives, vec![(0, 0, rotated_iou(&b(0.5, 0.0), &labels[0]))]);
        assert_eq!(m.false_positives, vec![1]);
    }

    #[test]
    fn below_threshold_is_false_positive() {
        let labels = vec![b(0.0, 0.0)];
        let m = match_boxes(&[b(3.0, 0.0)], &[0.9], &labels, 0.7);
        assert_eq!(m.false_positives, vec![0]);
        assert_eq!(m.false_negatives, vec![0]);
    }
}

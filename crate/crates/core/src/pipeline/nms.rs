//! Greedy non-maximum suppression and occupancy counting.

use std::cmp::Ordering;

use super::decode::DetectionBox;

/// Intersection over union of two boxes; 0 when the union is empty.
pub fn iou(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let (ax0, ay0, ax1, ay1) = a.corners();
    let (bx0, by0, bx1, by1) = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Indices of `boxes` in visiting order: confidence descending, ties by
/// input position.
pub fn visit_order(boxes: &[DetectionBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&i, &j| {
        boxes[j]
            .confidence
            .partial_cmp(&boxes[i].confidence)
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    order
}

/// Keep boxes in descending confidence, dropping any box whose IoU with an
/// already kept box reaches `iou_threshold`.
pub fn nms(boxes: &[DetectionBox], iou_threshold: f64) -> Vec<DetectionBox> {
    let mut kept: Vec<DetectionBox> = Vec::new();
    for i in visit_order(boxes) {
        let candidate = boxes[i];
        if kept.iter().all(|k| iou(k, &candidate) < iou_threshold) {
            kept.push(candidate);
        }
    }
    kept
}

/// Number of people in view: one box per detected head.
pub fn count_occupancy(boxes: &[DetectionBox]) -> usize {
    boxes.len()
}

//! Anchor-based box decoding.

use super::model::HeadTensor;

/// Detection in normalized image coordinates. Single class: head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub confidence: f64,
    pub class_id: u32,
}

impl DetectionBox {
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }

    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64, confidence: f64) -> Self {
        Self {
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
            w: x1 - x0,
            h: y1 - y0,
            confidence,
            class_id: 0,
        }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Decode head logits into boxes whose objectness reaches `conf_threshold`.
///
/// Centers follow `(2σ(t) − 0.5 + cell) · stride` and sizes
/// `(2σ(t))² · anchor`, both divided by `input_side`. Boxes are clipped to
/// the unit square; boxes that clip to nothing are dropped. Since σ < 1, a
/// threshold of 1 or more yields nothing.
pub fn decode(heads: &[HeadTensor], input_side: usize, conf_threshold: f64) -> Vec<DetectionBox> {
    let mut boxes = Vec::new();
    if !(conf_threshold < 1.0) {
        return boxes;
    }
    let side = input_side as f64;
    for head in heads {
        for (a, &(aw, ah)) in head.anchors.iter().enumerate() {
            for y in 0..head.grid_h {
                for x in 0..head.grid_w {
                    let conf = sigmoid(head.logit(a, 4, y, x));
                    if conf < conf_threshold || conf.is_nan() {
                        continue;
                    }
                    let sx = sigmoid(head.logit(a, 0, y, x));
                    let sy = sigmoid(head.logit(a, 1, y, x));
                    let sw = sigmoid(head.logit(a, 2, y, x));
                    let sh = sigmoid(head.logit(a, 3, y, x));
                    let cx = (2.0 * sx - 0.5 + x as f64) * head.stride / side;
                    let cy = (2.0 * sy - 0.5 + y as f64) * head.stride / side;
                    let w = (2.0 * sw).powi(2) * aw / side;
                    let h = (2.0 * sh).powi(2) * ah / side;
                    let x0 = (cx - w / 2.0).clamp(0.0, 1.0);
                    let y0 = (cy - h / 2.0).clamp(0.0, 1.0);
                    let x1 = (cx + w / 2.0).clamp(0.0, 1.0);
                    let y1 = (cy + h / 2.0).clamp(0.0, 1.0);
                    if x1 > x0 && y1 > y0 {
                        boxes.push(DetectionBox::from_corners(x0, y0, x1, y1, conf));
                    }
                }
            }
        }
    }
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(fill: f64, obj: f64) -> HeadTensor {
        let mut logits = vec![fill; 5 * 2 * 2];
        for v in &mut logits[4 * 4..5 * 4] {
            *v = obj;
        }
        HeadTensor {
            grid_h: 2,
            grid_w: 2,
            stride: 16.0,
            anchors: vec![(8.0, 8.0)],
            logits,
        }
    }

    #[test]
    fn negative_infinity_logits_give_nothing() {
        assert!(decode(&[head(f64::NEG_INFINITY, f64::NEG_INFINITY)], 32, 0.4).is_empty());
    }

    #[test]
    fn zero_logit_passes_point_four() {
        let boxes = decode(&[head(0.0, 0.0)], 32, 0.4);
        assert_eq!(boxes.len(), 4);
        let b = boxes[0];
        assert_eq!(b.confidence, 0.5);
        // σ(0) = 0.5: center at the middle of cell (0, 0), size = anchor
        assert!((b.cx - 0.25).abs() < 1e-12 && (b.cy - 0.25).abs() < 1e-12);
        assert!((b.w - 0.25).abs() < 1e-12);
    }

    #[test]
    fn threshold_one_gives_nothing() {
        assert!(decode(&[head(0.0, 1e6)], 32, 1.0).is_empty());
    }

    #[test]
    fn boxes_are_clipped_to_unit_square() {
        let mut h = head(0.0, 5.0);
        for v in &mut h.logits[2 * 4..4 * 4] {
            *v = 6.0; // huge boxes
        }
        for b in decode(&[h], 32, 0.4) {
            let (x0, y0, x1, y1) = b.corners();
            assert!(x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 + 1e-12 && y1 <= 1.0 + 1e-12);
            assert!(b.w > 0.0 && b.h > 0.0);
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(f64::NEG_INFINITY), 0.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }
}

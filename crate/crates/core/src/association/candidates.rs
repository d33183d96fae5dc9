use serde::Serialize;

use crate::data::BoundingBox;

/// Gap threshold as a fraction of the pair's mean box diagonal.
pub const DEFAULT_PAIR_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCandidate {
    pub i: usize,
    pub j: usize,
    pub union: BoundingBox,
}

fn is_pair(a: &BoundingBox, b: &BoundingBox, threshold: f64) -> bool {
    if a.iou(b) > 0.0 {
        return true;
    }
    let mean_diagonal = 0.5 * (a.diagonal() + b.diagonal());
    a.gap(b) <= threshold * mean_diagonal
}

/// Emits every pair `(i, j)`, `i < j`, whose boxes overlap or sit within
/// `threshold * mean diagonal` of each other, sorted by `(i, j)`.
pub fn build_interaction_candidates(boxes: &[BoundingBox], threshold: f64) -> Vec<PairCandidate> {
    let mut out = Vec::new();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            if is_pair(&boxes[i], &boxes[j], threshold) {
                out.push(PairCandidate {
                    i,
                    j,
                    union: boxes[i].union(&boxes[j]),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn far_apart_boxes_do_not_pair() {
        let boxes = [b(0.0, 0.0, 10.0, 10.0), b(110.0, 0.0, 120.0, 10.0)];
        assert!(build_interaction_candidates(&boxes, DEFAULT_PAIR_THRESHOLD).is_empty());
    }

    #[test]
    fn identical_boxes_pair_with_themselves_as_union() {
        let boxes = [b(3.0, 4.0, 10.0, 12.0), b(3.0, 4.0, 10.0, 12.0)];
        let c = build_interaction_candidates(&boxes, DEFAULT_PAIR_THRESHOLD);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].i, c[0].j), (0, 1));
        assert_eq!(c[0].union, boxes[0]);
    }

    #[test]
    fn near_gap_pairs_and_far_gap_does_not() {
        // diagonals are both 10*sqrt(2) ~ 14.14, threshold 0.1 -> 1.414 px
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(build_interaction_candidates(&[a, b(11.0, 0.0, 21.0, 10.0)], 0.1).len(), 1);
        assert_eq!(build_interaction_candidates(&[a, b(11.5, 0.0, 21.5, 10.0)], 0.1).len(), 0);
        // touching edges: IoU 0 but gap 0
        assert_eq!(build_interaction_candidates(&[a, b(10.0, 0.0, 20.0, 10.0)], 0.0).len(), 1);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..100.0f64, 0.0..100.0f64, 1.0..40.0f64, 1.0..40.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn pair_set_is_invariant_to_input_order(
            boxes in proptest::collection::vec(arb_box(), 0..8),
            rot in 0usize..8,
        ) {
            let n = boxes.len();
            let perm: Vec<usize> = (0..n).map(|k| (k + rot) % n.max(1)).collect();
            let shuffled: Vec<BoundingBox> = perm.iter().map(|&k| boxes[k]).collect();
            let mut original: Vec<(usize, usize)> = build_interaction_candidates(&boxes, 0.1)
                .iter().map(|c| (c.i, c.j)).collect();
            let mut mapped: Vec<(usize, usize)> = build_interaction_candidates(&shuffled, 0.1)
                .iter()
                .map(|c| {
                    let (x, y) = (perm[c.i], perm[c.j]);
                    (x.min(y), x.max(y))
                })
                .collect();
            original.sort();
            mapped.sort();
            prop_assert_eq!(original, mapped);
        }
    }
}

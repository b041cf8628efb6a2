use crate::diffcore::Tensor;
use crate::geometry::Mask;
use crate::slotworld::DecoderSpec;

/// Decoded view of one slot row.
#[derive(Clone, Debug)]
pub struct SlotView {
    /// Row in the frame's slot matrix.
    pub row: usize,
    pub mask: Mask,
    /// Mean soft-mask value over the grid.
    pub mass: f64,
}

/// Decodes every row of `slots` and keeps those with mass ≥ `mass_floor`.
pub fn foreground_slots(spec: &DecoderSpec, slots: &Tensor, threshold: f64, mass_floor: f64) -> Vec<SlotView> {
    (0..slots.rows())
        .filter_map(|row| {
            let z = slots.row(row);
            let soft = spec.mask(z);
            let mass = soft.iter().sum::<f64>() / soft.len() as f64;
            (mass >= mass_floor).then(|| SlotView {
                row,
                mask: Mask::from_soft(spec.height, spec.width, &soft, threshold),
                mass,
            })
        })
        .collect()
}

/// Greedy scan in order: an entry is discarded when its mask has IoU above
/// `tau_iou` with an earlier survivor. Returns positions of survivors.
pub fn dedup_first_frame(masks: &[&Mask], tau_iou: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, m) in masks.iter().enumerate() {
        if kept.iter().all(|&k| masks[k].iou(m) <= tau_iou) {
            kept.push(i);
        }
    }
    kept
}

/// Positions of masks with IoU ≤ `tau_new` against every reference mask,
/// deduplicated among themselves at `tau_iou`.
pub fn new_object_candidates(masks: &[&Mask], reference: &[&Mask], tau_new: f64, tau_iou: f64) -> Vec<usize> {
    let fresh: Vec<usize> = (0..masks.len())
        .filter(|&i| reference.iter().all(|r| r.iou(masks[i]) <= tau_new))
        .collect();
    let sub: Vec<&Mask> = fresh.iter().map(|&i| masks[i]).collect();
    dedup_first_frame(&sub, tau_iou)
        .into_iter()
        .map(|k| fresh[k])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: usize, x1: usize) -> Mask {
        let mut m = Mask::empty(4, 20);
        for y in 0..4 {
            for x in x0..x1 {
                m.set(y, x, true);
            }
        }
        m
    }

    #[test]
    fn near_duplicate_is_discarded() {
        // IoU of [0,20) and [0,19) is 0.95
        let a = rect(0, 10);
        let b = rect(10, 20);
        let c = rect(10, 19);
        assert!((b.iou(&c) - 0.9).abs() < 1e-12);
        let c2 = {
            let mut m = Mask::empty(4, 40);
            for y in 0..4 {
                for x in 0..19 {
                    m.set(y, x, true);
                }
            }
            m
        };
        let b2 = {
            let mut m = Mask::empty(4, 40);
            for y in 0..4 {
                for x in 0..20 {
                    m.set(y, x, true);
                }
            }
            m
        };
        assert!((b2.iou(&c2) - 0.95).abs() < 1e-12);
        let far = {
            let mut m = Mask::empty(4, 40);
            m.set(0, 30, true);
            m
        };
        assert_eq!(dedup_first_frame(&[&far, &b2, &c2], 0.9), vec![0, 1]);
        // exactly at the threshold survives
        assert_eq!(dedup_first_frame(&[&a, &b, &c], 0.9), vec![0, 1, 2]);
    }

    #[test]
    fn disjoint_all_survive() {
        let ms = [rect(0, 5), rect(5, 10), rect(10, 15)];
        let refs: Vec<&Mask> = ms.iter().collect();
        assert_eq!(dedup_first_frame(&refs, 0.9), vec![0, 1, 2]);
    }

    #[test]
    fn candidates_need_low_iou_with_all_references() {
        let reference = [rect(0, 10)];
        let ms = [rect(1, 10), rect(12, 20), rect(12, 20), rect(8, 16)];
        let refs: Vec<&Mask> = ms.iter().collect();
        let r: Vec<&Mask> = reference.iter().collect();
        // rect(8,16) overlaps reference with IoU 2/16 ≤ 0.2
        assert_eq!(new_object_candidates(&refs, &r, 0.2, 0.9), vec![1, 3]);
    }
}

use std::collections::BTreeMap;

use super::sequence::Sequence;

/// Spatio-temporal IoU `Σ_t |A_t ∩ B_t| / Σ_t |A_t ∪ B_t|` of every GT
/// trajectory against every predicted tracklet. Returns `(gt ids, pred ids,
/// matrix gt × pred)`.
pub fn iou_3d(seq: &Sequence) -> (Vec<u32>, Vec<u32>, Vec<Vec<f64>>) {
    let mut gt_area: BTreeMap<u32, f64> = BTreeMap::new();
    let mut pred_area: BTreeMap<u32, f64> = BTreeMap::new();
    let mut inter: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for f in &seq.frames {
        for g in &f.gt {
            *gt_area.entry(g.id).or_default() += g.area;
        }
        for p in &f.pred {
            *pred_area.entry(p.id).or_default() += p.area;
        }
        for (gi, g) in f.gt.iter().enumerate() {
            for (pi, p) in f.pred.iter().enumerate() {
                *inter.entry((g.id, p.id)).or_default() += f.intersection(gi, pi);
            }
        }
    }
    let gids: Vec<u32> = gt_area.keys().copied().collect();
    let pids: Vec<u32> = pred_area.keys().copied().collect();
    let m = gids
        .iter()
        .map(|g| {
            pids.iter()
                .map(|p| {
                    let i = inter.get(&(*g, *p)).copied().unwrap_or(0.0);
                    let u = gt_area[g] + pred_area[p] - i;
                    if u > 0.0 {
                        i / u
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    (gids, pids, m)
}

/// Ranked detections `(score, is_true_positive)` of one video: tracklets in
/// decreasing score each claim the unclaimed GT trajectory of highest 3D
/// IoU, if that IoU reaches `threshold`.
pub fn ranked_hits(seq: &Sequence, scores: &BTreeMap<u32, f64>, threshold: f64) -> (Vec<(f64, bool)>, usize) {
    let (gids, pids, m) = iou_3d(seq);
    let mut order: Vec<usize> = (0..pids.len()).collect();
    let score = |k: usize| scores.get(&pids[k]).copied().unwrap_or(0.0);
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(pids[a].cmp(&pids[b])));
    let mut taken = vec![false; gids.len()];
    let hits = order
        .into_iter()
        .map(|k| {
            let best = (0..gids.len())
                .filter(|&g| !taken[g] && m[g][k] >= threshold)
                .max_by(|&a, &b| m[a][k].total_cmp(&m[b][k]).then(b.cmp(&a)));
            if let Some(g) = best {
                taken[g] = true;
            }
            (score(k), best.is_some())
        })
        .collect();
    (hits, gids.len())
}

/// All-point interpolated average precision; `None` without GT.
pub fn average_precision(hits: &[(f64, bool)], num_gt: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut sorted = hits.to_vec();
    // stable: equal scores keep their order
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0.0;
    let mut prec = Vec::with_capacity(sorted.len());
    let mut rec = Vec::with_capacity(sorted.len());
    for (k, &(_, hit)) in sorted.iter().enumerate() {
        if hit {
            tp += 1.0;
        }
        prec.push(tp / (k + 1) as f64);
        rec.push(tp / num_gt as f64);
    }
    for k in (0..prec.len().saturating_sub(1)).rev() {
        prec[k] = prec[k].max(prec[k + 1]);
    }
    let mut ap = 0.0;
    let mut r_prev = 0.0;
    for (p, r) in prec.iter().zip(&rec) {
        ap += (r - r_prev) * p;
        r_prev = *r;
    }
    Some(ap)
}

/// Track mAP of a single video with a 3D IoU threshold.
pub fn track_map(seq: &Sequence, scores: &BTreeMap<u32, f64>, threshold: f64) -> Option<f64> {
    let (hits, n) = ranked_hits(seq, scores, threshold);
    average_precision(&hits, n)
}

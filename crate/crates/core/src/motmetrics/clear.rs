use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::hungarian::hungarian;
use super::sequence::Sequence;

/// Cost for pairs outside the gate; large enough that the assignment
/// first maximizes the number of gated pairs.
const BLOCKED: f64 = 1e6;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearMot {
    pub mota: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub gt_total: usize,
    /// GT trajectories matched in ≥ 80% of their frames.
    pub mostly_tracked: usize,
    /// GT trajectories matched in ≤ 20% of their frames.
    pub mostly_lost: usize,
    pub trajectories: usize,
}

impl ClearMot {
    pub fn mt(&self) -> f64 {
        ratio(self.mostly_tracked, self.trajectories)
    }

    pub fn ml(&self) -> f64 {
        ratio(self.mostly_lost, self.trajectories)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub(crate) fn mota(fp: usize, fn_: usize, ids: usize, gt_total: usize) -> f64 {
    if gt_total == 0 {
        return if fp == 0 { 1.0 } else { 0.0 };
    }
    1.0 - (fp + fn_ + ids) as f64 / gt_total as f64
}

/// Per-frame matches as `(gt index, pred index)` using carried-over
/// correspondences and then a min-cost assignment of the rest. `gate` is
/// the largest admissible IoU distance.
pub fn frame_matches(
    seq: &Sequence,
    t: usize,
    prev: &BTreeMap<u32, u32>,
    gate: f64,
) -> Vec<(usize, usize)> {
    let f = &seq.frames[t];
    let ok = |g: usize, p: usize| 1.0 - f.iou(g, p) <= gate;
    let mut matches = Vec::new();
    let mut g_used = vec![false; f.gt.len()];
    let mut p_used = vec![false; f.pred.len()];
    for (gi, g) in f.gt.iter().enumerate() {
        if let Some(&pid) = prev.get(&g.id) {
            if let Some(pi) = f.pred.iter().position(|p| p.id == pid) {
                if !p_used[pi] && ok(gi, pi) {
                    matches.push((gi, pi));
                    g_used[gi] = true;
                    p_used[pi] = true;
                }
            }
        }
    }
    let gs: Vec<usize> = (0..f.gt.len()).filter(|&i| !g_used[i]).collect();
    let ps: Vec<usize> = (0..f.pred.len()).filter(|&i| !p_used[i]).collect();
    if !gs.is_empty() && !ps.is_empty() {
        let cost: Vec<Vec<f64>> = gs
            .iter()
            .map(|&g| {
                ps.iter()
                    .map(|&p| if ok(g, p) { 1.0 - f.iou(g, p) } else { BLOCKED })
                    .collect()
            })
            .collect();
        for (k, a) in hungarian(&cost).into_iter().enumerate() {
            if let Some(c) = a {
                if cost[k][c] < BLOCKED {
                    matches.push((gs[k], ps[c]));
                }
            }
        }
    }
    matches.sort();
    matches
}

/// CLEAR-MOT counts with the given frame matcher.
pub fn clear_mot_with<F>(seq: &Sequence, gate: f64, mut matcher: F) -> ClearMot
where
    F: FnMut(&Sequence, usize, &BTreeMap<u32, u32>, f64) -> Vec<(usize, usize)>,
{
    let mut prev: BTreeMap<u32, u32> = BTreeMap::new();
    let mut last: BTreeMap<u32, u32> = BTreeMap::new();
    let mut present: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    let mut out = ClearMot::default();
    for t in 0..seq.frames.len() {
        let f = &seq.frames[t];
        let m = matcher(seq, t, &prev, gate);
        let mut now = BTreeMap::new();
        for &(gi, pi) in &m {
            let (g, p) = (f.gt[gi].id, f.pred[pi].id);
            if last.get(&g).is_some_and(|&q| q != p) {
                out.ids += 1;
            }
            last.insert(g, p);
            now.insert(g, p);
        }
        let matched: BTreeSet<usize> = m.iter().map(|&(g, _)| g).collect();
        for (gi, g) in f.gt.iter().enumerate() {
            let e = present.entry(g.id).or_default();
            e.0 += 1;
            if matched.contains(&gi) {
                e.1 += 1;
            }
        }
        out.fp += f.pred.len() - m.len();
        out.fn_ += f.gt.len() - m.len();
        out.gt_total += f.gt.len();
        prev = now;
    }
    out.trajectories = present.len();
    for &(n, hit) in present.values() {
        let r = hit as f64 / n as f64;
        if r >= 0.8 {
            out.mostly_tracked += 1;
        }
        if r <= 0.2 {
            out.mostly_lost += 1;
        }
    }
    out.mota = mota(out.fp, out.fn_, out.ids, out.gt_total);
    out
}

pub fn clear_mot(seq: &Sequence, gate: f64) -> ClearMot {
    clear_mot_with(seq, gate, frame_matches)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdScores {
    pub idf1: f64,
    pub idtp: usize,
    pub gt_total: usize,
    pub pred_total: usize,
}

pub(crate) fn idf1_from(idtp: usize, gt_total: usize, pred_total: usize) -> f64 {
    if gt_total + pred_total == 0 {
        1.0
    } else {
        2.0 * idtp as f64 / (gt_total + pred_total) as f64
    }
}

/// Identity F1 under the one-to-one trajectory assignment maximizing the
/// number of gated co-occurrences.
pub fn idf1(seq: &Sequence, gate: f64) -> IdScores {
    let mut gids: BTreeMap<u32, usize> = BTreeMap::new();
    let mut pids: BTreeMap<u32, usize> = BTreeMap::new();
    let mut gt_total = 0;
    let mut pred_total = 0;
    for f in &seq.frames {
        for g in &f.gt {
            let n = gids.len();
            gids.entry(g.id).or_insert(n);
        }
        for p in &f.pred {
            let n = pids.len();
            pids.entry(p.id).or_insert(n);
        }
        gt_total += f.gt.len();
        pred_total += f.pred.len();
    }
    let mut tp = vec![vec![0usize; pids.len()]; gids.len()];
    for f in &seq.frames {
        for (gi, g) in f.gt.iter().enumerate() {
            for (pi, p) in f.pred.iter().enumerate() {
                if 1.0 - f.iou(gi, pi) <= gate {
                    tp[gids[&g.id]][pids[&p.id]] += 1;
                }
            }
        }
    }
    let cost: Vec<Vec<f64>> = tp.iter().map(|r| r.iter().map(|&c| -(c as f64)).collect()).collect();
    let idtp = hungarian(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(g, p)| p.map(|p| tp[g][p]))
        .sum();
    IdScores {
        idf1: idf1_from(idtp, gt_total, pred_total),
        idtp,
        gt_total,
        pred_total,
    }
}

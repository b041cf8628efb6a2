//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.
//!
//! Criteria 6 to 9 train models (several minutes each in release mode);
//! the trained checkpoints are shared between those criteria.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::time::Instant;

use ocmot::cli::{self, Command, RunConfig};
use ocmot::diffcore::{grad_check_many, multi_head_attention, Graph, MhaParams, ParamStore, Tensor, Var};
use ocmot::emloss::{assign_cost, em_loss, em_loss_brute, LogLikelihood, LossWeights};
use ocmot::geometry::{BBox, Mask};
use ocmot::indexmerge::{binarize, index, merge, AssocParams, IndexKind};
use ocmot::membank::{BufferState, MemoryBank, RolloutConfig, RolloutModel};
use ocmot::motmetrics::{
    adjusted_rand_index, best_track, clear_mot, clear_mot_with, evaluate, fg_ari, hungarian, idf1,
    foreground_labels, EvalConfig, Sequence, Summary,
};
use ocmot::slotworld::{generate, occlusion_scenario, Dataset, DecoderSpec, FrameGt, ObjectGt, SimConfig};
use ocmot::tracker::{
    baseline_iou_tracker, track_video, BaselineConfig, InferenceConfig, TrackFrame, Tracklet, TrackletSet,
};
use ocmot::trainer::{evaluate_loss, train_step, Checkpoint, Model, ModelConfig, QueryKind, TrainConfig};
use ocmot::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Training steps of every model in criteria 6 to 9.
const STEPS: usize = 2000;
const SEEDS: [u64; 3] = [0, 1, 2];
const TRAIN_DATA_SEED: u64 = 1;
const HELD_OUT_SEED: u64 = 1000;
const HELD_OUT_VIDEOS: usize = 50;
const SCENARIOS: u64 = 100;

type Outcome = (bool, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1

/// Runs a gradient check, moving to a fresh random point when the
/// finite differences straddle a clamp kink.
fn checked<F>(mut point: impl FnMut(&mut ChaCha8Rng) -> Vec<Tensor>, f: F, seed: u64) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> ocmot::Result<Var>,
{
    let mut r = rng(seed);
    for _ in 0..20 {
        let p = point(&mut r);
        match grad_check_many(&f, &p, 1e-6) {
            Ok(rep) => return rep.max_rel_err,
            Err(Error::NonSmooth { .. }) => continue,
            Err(e) => panic!("grad check failed to run: {e}"),
        }
    }
    f64::INFINITY
}

fn small_spec() -> DecoderSpec {
    DecoderSpec { height: 10, width: 12, dim: 10, ..DecoderSpec::default() }
}

/// A latent with a moderately sized blob, away from the scale clamp.
fn latent(r: &mut ChaCha8Rng, rows: usize, d: usize) -> Tensor {
    let mut t = Tensor::uniform(&[rows, d], 1.0, r);
    for i in 0..rows {
        t.set(i, 2, r.gen_range(-2.0..-1.2));
        t.set(i, 3, r.gen_range(-2.0..-1.2));
    }
    t
}

fn gradient_fidelity() -> Outcome {
    let mut store = ParamStore::new();
    let params = MhaParams::init(&mut store, "a", 8, true, &mut rng(0));
    let mut mr = rng(1);
    let mut mask = Tensor::uniform(&[3, 4], 0.4, &mut mr);
    for i in 0..3 {
        for j in 0..4 {
            mask.set(i, j, if j == 3 { 0.0 } else { 0.6 + mask.get(i, j) });
        }
    }
    let probe = Tensor::uniform(&[3, 8], 1.0, &mut mr);
    let attn = checked(
        |r| vec![Tensor::uniform(&[3, 8], 1.0, r), Tensor::uniform(&[4, 8], 1.0, r)],
        |g, v| {
            let w = params.bind(g, &store);
            let m = g.input(mask.clone());
            let o = multi_head_attention(g, &w, 2, v[0], v[1], v[1], Some(m))?;
            let p = g.input(probe.clone());
            let y = g.mul(o.output.unwrap(), p)?;
            let a = g.sum(y);
            let b = g.sum(o.weights);
            g.add(a, b)
        },
        2,
    );

    let spec = small_spec();
    let wdec = Tensor::uniform(&[2, 3 * spec.pixels()], 1.0, &mut rng(3));
    let dec = checked(
        |r| vec![latent(r, 2, spec.dim)],
        |g, v| {
            let d = spec.decode(g, v[0])?;
            let w = g.input(wdec.clone());
            let p = g.mul(d.recon, w)?;
            let a = g.sum(p);
            let b = g.sum(d.mask);
            g.add(a, b)
        },
        4,
    );

    let w = LossWeights::new(1.0, 0.1, 0.0);
    let cost = checked(
        |r| vec![latent(r, 1, spec.dim), latent(r, 1, spec.dim)],
        |g, v| assign_cost(g, &spec, v[0], v[1], &w),
        5,
    );

    let full = checked(
        |r| {
            let idx = Tensor::uniform(&[3, 2], 0.4, r);
            let idx = Tensor::new(&[3, 2], idx.data().iter().map(|x| x + 0.5).collect()).unwrap();
            vec![latent(r, 3, spec.dim), latent(r, 2, spec.dim), latent(r, 2, spec.dim), idx]
        },
        |g, v| em_loss(g, &spec, v[0], v[1], v[2], v[3], &w),
        6,
    );
    let worst = attn.max(dec).max(cost).max(full);
    (
        worst < 1e-4,
        format!("max rel err: attention {attn:.1e}, decode {dec:.1e}, assign_cost {cost:.1e}, em_loss {full:.1e}"),
    )
}

// ---------------------------------------------------------------- 2

fn em_loss_oracle() -> Outcome {
    let spec = small_spec();
    let w = LossWeights::new(1.0, 0.1, 0.05);
    let mut r = rng(20);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.gen_range(1..6);
        let m = r.gen_range(1..5);
        let s = Tensor::uniform(&[n, spec.dim], 2.0, &mut r);
        let mm = Tensor::uniform(&[m, spec.dim], 2.0, &mut r);
        let ro = Tensor::uniform(&[m, spec.dim], 2.0, &mut r);
        let mut idx = Tensor::uniform(&[n, m], 1.0, &mut r);
        for i in 0..n {
            let row: Vec<f64> = idx.row(i).iter().map(|x| x.abs()).collect();
            let z: f64 = row.iter().sum();
            for (j, v) in row.into_iter().enumerate() {
                idx.set(i, j, v / z);
            }
        }
        let mut g = Graph::new();
        let (a, b, c, d) = (g.input(s), g.input(mm), g.input(ro), g.input(idx));
        let fast = em_loss(&mut g, &spec, a, b, c, d, &w).unwrap();
        let slow = em_loss_brute(&mut g, &spec, a, b, c, d, &w).unwrap();
        worst = worst.max((g.value(fast).item() - g.value(slow).item()).abs());
    }
    (worst < 1e-6, format!("100 instances, max |vectorized - double sum| = {worst:.1e}"))
}

// ---------------------------------------------------------------- 3

fn likelihood_consistency() -> Outcome {
    let spec = DecoderSpec::default();
    let mut r = rng(30);
    let mut report = Vec::new();
    let mut ok = true;
    for w in [LossWeights::new(1.0, 0.1, 0.0), LossWeights::new(1.0, 0.1, 0.3)] {
        let mut deltas = Vec::new();
        for _ in 0..2 {
            let s = Tensor::uniform(&[spec.dim], 2.0, &mut r).into_data();
            let m = Tensor::uniform(&[spec.dim], 2.0, &mut r).into_data();
            let mut g = Graph::new();
            let sv = g.input(Tensor::row_vector(&s));
            let mv = g.input(Tensor::row_vector(&m));
            let c = assign_cost(&mut g, &spec, sv, mv, &w).unwrap();
            let nll = LogLikelihood::evaluate(&spec, &s, &m, &w).neg_log_joint();
            deltas.push(nll - g.value(c).item());
        }
        let gap = (deltas[0] - deltas[1]).abs();
        ok &= gap < 1e-6;
        report.push(format!("λ=({}, {}, {}) |Δ1-Δ2| = {gap:.1e}", w.mask, w.recon, w.feature));
    }
    (ok, report.join("; "))
}

// ---------------------------------------------------------------- 4

fn fifo_property() -> bool {
    let mut r = rng(40);
    for _ in 0..1000 {
        let t_max = r.gen_range(1..7);
        let mut bank: MemoryBank<u32> = MemoryBank::new(1, t_max, 3).unwrap();
        let id = bank.activate(0, 0).unwrap();
        let mut model: VecDeque<(usize, u32)> = VecDeque::from([(0, 0)]);
        let mut t = 0;
        for _ in 0..r.gen_range(0..25) {
            t += r.gen_range(1..3);
            let v: u32 = r.gen();
            bank.write(id, v, t).unwrap();
            model.push_back((t, v));
            while model.len() > t_max {
                model.pop_front();
            }
        }
        let want: Vec<u32> = model.iter().map(|p| p.1).collect();
        let times: Vec<usize> = model.iter().map(|p| p.0).collect();
        if bank.entries(id).unwrap() != want || bank.timestamps(id).unwrap() != times {
            return false;
        }
    }
    true
}

fn lifecycle_property() -> bool {
    let mut r = rng(41);
    for _ in 0..300 {
        let (cap, tau) = (r.gen_range(1..5), r.gen_range(1..4u32));
        let mut bank: MemoryBank<u8> = MemoryBank::new(cap, 4, tau).unwrap();
        // reference: None = free, Some(0) active, Some(k) k misses, Some(MAX) terminated
        let mut model: Vec<Option<u32>> = vec![None; cap];
        let mut t = 0;
        for _ in 0..40 {
            t += 1;
            let id = r.gen_range(0..cap);
            match r.gen_range(0..3) {
                0 => {
                    let want = model.iter().position(|s| s.is_none());
                    match (bank.activate(0, t), want) {
                        (Ok(got), Some(w)) if got == w => model[w] = Some(0),
                        (Err(Error::Capacity { .. }), None) => {}
                        _ => return false,
                    }
                }
                1 => {
                    let live = matches!(model[id], Some(k) if k != u32::MAX);
                    match (bank.write(id, 1, t), live) {
                        (Ok(()), true) => model[id] = Some(0),
                        (Err(_), false) => {}
                        _ => return false,
                    }
                }
                _ => {
                    let next = match model[id] {
                        Some(k) if k == u32::MAX => None,
                        Some(k) if k < tau => Some(k + 1),
                        Some(_) => Some(u32::MAX),
                        None => None,
                    };
                    match (bank.mark_missed(id), next) {
                        (Ok(_), Some(n)) => model[id] = Some(n),
                        (Err(_), None) => {}
                        _ => return false,
                    }
                }
            }
            for (i, s) in model.iter().enumerate() {
                let want = match s {
                    None => BufferState::Free,
                    Some(0) => BufferState::Active,
                    Some(k) if *k == u32::MAX => BufferState::Terminated,
                    Some(k) => BufferState::Dormant(*k),
                };
                if bank.state(i).unwrap() != want {
                    return false;
                }
            }
        }
    }
    true
}

fn rollout_causality() -> bool {
    let mut store = ParamStore::new();
    let cfg = RolloutConfig { width: 16, heads: 2, layers: 2, ff_hidden: 24 };
    let model = RolloutModel::init(&mut store, "r", cfg, 8, 6, &mut rng(42)).unwrap();
    let mut r = rng(43);
    for _ in 0..20 {
        let lens = [r.gen_range(1..7), r.gen_range(1..7)];
        let toks: Vec<Tensor> = (0..lens[0] + lens[1]).map(|_| Tensor::uniform(&[1, 8], 1.0, &mut r)).collect();
        let run = |toks: &[Tensor]| {
            let mut g = Graph::new();
            let v: Vec<_> = toks.iter().map(|t| g.input(t.clone())).collect();
            let seqs = vec![v[..lens[0]].to_vec(), v[lens[0]..].to_vec()];
            let out = model.forward_all(&mut g, &store, &seqs).unwrap();
            g.value(out).clone()
        };
        let base = run(&toks);
        // perturb position p of buffer 0: rows before p and all of buffer 1 stay fixed
        let p = r.gen_range(0..lens[0]);
        let mut edited = toks.clone();
        edited[p] = Tensor::uniform(&[1, 8], 1.0, &mut r);
        let out = run(&edited);
        for row in 0..base.rows() {
            let same = base.row(row) == out.row(row);
            let must_stay = row < p || row >= lens[0];
            if (must_stay && !same) || (row == p && same) {
                return false;
            }
        }
    }
    true
}

fn structural_invariants() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [IndexKind::TwoMha, IndexKind::OneMhaShared, IndexKind::DotProduct] {
        let mut store = ParamStore::new();
        let p = AssocParams::init(&mut store, kind, 16, 4, &mut rng(44)).unwrap();
        let mut r = rng(45);
        for _ in 0..50 {
            let (n, m) = (r.gen_range(1..10), r.gen_range(1..8));
            let mut g = Graph::new();
            let s = g.input(Tensor::uniform(&[n, 16], 3.0, &mut r));
            let ro = g.input(Tensor::uniform(&[m, 16], 3.0, &mut r));
            let idx = index(&mut g, &store, &p, s, ro).unwrap();
            for i in 0..n {
                worst = worst.max((g.value(idx).row(i).iter().sum::<f64>() - 1.0).abs());
            }
            let hard = binarize(g.value(idx));
            let hard = g.input(hard);
            merge(&mut g, &store, &p, s, ro, hard).unwrap();
        }
    }
    let tie = Tensor::from_rows(&[vec![0.2, 0.4, 0.4], vec![0.5, 0.5, 0.0], vec![0.1, 0.3, 0.6]]).unwrap();
    let b = binarize(&tie);
    let binar = b.data() == [0., 1., 0., 1., 0., 0., 0., 0., 1.];
    let (fifo, life, causal) = (fifo_property(), lifecycle_property(), rollout_causality());
    (
        worst < 1e-6 && binar && fifo && life && causal,
        format!(
            "index row sums off by {worst:.1e}; binarize ties {binar}; fifo {fifo}; lifecycle {life}; rollout causality {causal}"
        ),
    )
}

// ---------------------------------------------------------------- 5

fn bx(x0: f64, y0: f64, w: f64, h: f64) -> BBox {
    BBox { x0, y0, x1: x0 + w, y1: y0 + h }
}

/// Exhaustive per-frame matching: keep last frame's pairs that still pass
/// the gate, then among all one-to-one matchings of the rest take the most
/// pairs, breaking ties by the smallest total distance.
fn brute_matcher(seq: &Sequence, t: usize, prev: &BTreeMap<u32, u32>, gate: f64) -> Vec<(usize, usize)> {
    let f = &seq.frames[t];
    let dist = |g: usize, p: usize| 1.0 - f.iou(g, p);
    let mut fixed = Vec::new();
    for (gi, g) in f.gt.iter().enumerate() {
        if let Some(pi) = prev.get(&g.id).and_then(|pid| f.pred.iter().position(|p| p.id == *pid)) {
            if dist(gi, pi) <= gate {
                fixed.push((gi, pi));
            }
        }
    }
    let gs: Vec<usize> = (0..f.gt.len()).filter(|g| !fixed.iter().any(|m| m.0 == *g)).collect();
    let ps: Vec<usize> = (0..f.pred.len()).filter(|p| !fixed.iter().any(|m| m.1 == *p)).collect();
    fn search(
        k: usize,
        gs: &[usize],
        ps: &[usize],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        best: &mut (usize, f64, Vec<(usize, usize)>),
        ok: &dyn Fn(usize, usize) -> Option<f64>,
    ) {
        if k == gs.len() {
            let c: f64 = cur.iter().map(|&(g, p)| ok(g, p).unwrap()).sum();
            if cur.len() > best.0 || cur.len() == best.0 && c < best.1 {
                *best = (cur.len(), c, cur.clone());
            }
            return;
        }
        search(k + 1, gs, ps, used, cur, best, ok);
        for (j, &p) in ps.iter().enumerate() {
            if !used[j] && ok(gs[k], p).is_some() {
                used[j] = true;
                cur.push((gs[k], p));
                search(k + 1, gs, ps, used, cur, best, ok);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let ok = |g: usize, p: usize| (dist(g, p) <= gate).then(|| dist(g, p));
    let mut best = (0, 0.0, Vec::new());
    search(0, &gs, &ps, &mut vec![false; ps.len()], &mut Vec::new(), &mut best, &ok);
    fixed.extend(best.2);
    fixed.sort();
    fixed
}

/// Dense contingency-table ARI with binomial coefficients.
fn ari_table(a: &[u32], b: &[u32]) -> f64 {
    let la: Vec<u32> = {
        let mut v = a.to_vec();
        v.sort();
        v.dedup();
        v
    };
    let lb: Vec<u32> = {
        let mut v = b.to_vec();
        v.sort();
        v.dedup();
        v
    };
    let mut table = vec![vec![0u64; lb.len()]; la.len()];
    for (x, y) in a.iter().zip(b) {
        let i = la.binary_search(x).unwrap();
        let j = lb.binary_search(y).unwrap();
        table[i][j] += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1) / 2) as f64;
    let sum_ij: f64 = table.iter().flatten().map(|&n| c2(n)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..lb.len()).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let expected = sum_a * sum_b / c2(a.len() as u64);
    (sum_ij - expected) / (0.5 * (sum_a + sum_b) - expected)
}

fn random_frame_set(r: &mut ChaCha8Rng) -> (TrackletSet, Vec<FrameGt>) {
    let (h, w) = (6, 7);
    let frames = 3;
    let mut gts = Vec::new();
    let mut tracks: Vec<Tracklet> = (0..r.gen_range(1..4))
        .map(|id| Tracklet { id, activated: 0, terminated: None, frames: Vec::new() })
        .collect();
    for t in 0..frames {
        let mut covered = Mask::empty(h, w);
        let mut objects = Vec::new();
        for id in 0..r.gen_range(1..4u32) {
            let bits: Vec<bool> = (0..h * w).map(|_| r.gen_bool(0.3)).collect();
            let amodal = Mask::from_bits(h, w, bits);
            let visible = amodal.minus(&covered);
            covered.union_with(&amodal);
            objects.push(ObjectGt { id, bbox: amodal.bbox(), visibility: 1.0, amodal, visible });
        }
        gts.push(FrameGt { objects });
        for tr in &mut tracks {
            let bits: Vec<bool> = (0..h * w).map(|_| r.gen_bool(0.35)).collect();
            let mask = Mask::from_bits(h, w, bits);
            tr.frames.push(TrackFrame { frame: t, repr: Vec::new(), bbox: mask.bbox(), mask, mass: 0.1 });
        }
    }
    (TrackletSet { video: 0, frames, height: h, width: w, tracks }, gts)
}

fn metrics_oracles() -> Outcome {
    let one = bx(0.0, 0.0, 1.0, 1.0);
    let sw = Sequence::build(&[(vec![(0, one)], vec![(1, one)]), (vec![(0, one)], vec![(2, one)])]);
    let (mota, f1) = (clear_mot(&sw, 0.7).mota, idf1(&sw, 0.7).idf1);
    let switch = mota == 0.5 && f1 == 0.5;

    let mut r = rng(50);
    let mut agree = 0;
    for _ in 0..1000 {
        let ng = r.gen_range(0..4u32);
        let np = r.gen_range(0..4u32);
        let present = |r: &mut ChaCha8Rng, n: u32, offset: u32| -> Vec<(u32, BBox)> {
            let mut v = Vec::new();
            for id in 0..n {
                if r.gen_bool(0.85) {
                    v.push((id + offset, bx(r.gen_range(0.0..2.0), r.gen_range(0.0..2.0), 1.0, 1.0)));
                }
            }
            v
        };
        let frames: Vec<_> = (0..5).map(|_| (present(&mut r, ng, 0), present(&mut r, np, 10))).collect();
        let seq = Sequence::build(&frames);
        let gate = r.gen_range(0.3..0.95);
        if clear_mot(&seq, gate) == clear_mot_with(&seq, gate, brute_matcher) {
            agree += 1;
        }
    }

    let mut worst = 0.0f64;
    let mut ari_checks = 0;
    for _ in 0..200 {
        let (set, gts) = random_frame_set(&mut r);
        let (g, p) = foreground_labels(&set, &gts);
        let want = ari_table(&g, &p);
        if let (Some(got), true) = (fg_ari(&set, &gts), want.is_finite()) {
            worst = worst.max((got - want).abs());
            ari_checks += 1;
        }
    }
    let direct = adjusted_rand_index(&[0, 0, 1, 1, 2], &[1, 1, 0, 2, 2]).unwrap();
    worst = worst.max((direct - ari_table(&[0, 0, 1, 1, 2], &[1, 1, 0, 2, 2])).abs());
    (
        switch && agree == 1000 && worst < 1e-9,
        format!(
            "ID-switch MOTA {mota} IDF1 {f1}; brute-force CLEAR agreement {agree}/1000; FG-ARI vs table max err {worst:.1e} over {ari_checks} cases"
        ),
    )
}

// ---------------------------------------------------------------- 6 to 9

/// Trained checkpoints are cached under the target directory, keyed by the
/// bytes of a two-step run of the same configuration: any change to the
/// model, loss or optimizer code changes the key and forces retraining.
fn cache_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn fresh(mc: &ModelConfig, seed: u64) -> Checkpoint {
    let tc = TrainConfig { steps: STEPS, seed, ..TrainConfig::default() };
    Checkpoint::new(Model::init(mc.clone(), seed).unwrap(), tc)
}

fn fingerprint(mc: &ModelConfig, seed: u64, data: &Dataset) -> String {
    let mut ck = fresh(mc, seed);
    for _ in 0..2 {
        train_step(&mut ck, data).unwrap();
    }
    let mut h = Sha256::new();
    h.update(ck.to_bytes().unwrap());
    h.update(data.to_bytes().unwrap());
    h.update(STEPS.to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// Trains (or loads) a model for `STEPS` steps. With `snapshot`, also
/// returns the serialized checkpoint at that step.
fn trained(name: &str, mc: &ModelConfig, seed: u64, data: &Dataset, snapshot: Option<usize>) -> (Checkpoint, Option<Vec<u8>>) {
    let key = fingerprint(mc, seed, data);
    let dir = cache_dir();
    let final_path = dir.join(format!("{name}-{key}.ckpt"));
    let snap_path = snapshot.map(|at| dir.join(format!("{name}-{key}.step{at}.ckpt")));
    if final_path.is_file() && snap_path.as_ref().map_or(true, |p| p.is_file()) {
        let ck = Checkpoint::load(&final_path).unwrap();
        let snap = snap_path.map(|p| std::fs::read(p).unwrap());
        return (ck, snap);
    }
    let t0 = Instant::now();
    let mut ck = fresh(mc, seed);
    let mut snap = None;
    while ck.step < STEPS {
        if snapshot == Some(ck.step) {
            snap = Some(ck.to_bytes().unwrap());
        }
        train_step(&mut ck, data).unwrap();
    }
    if let (Some(p), Some(b)) = (&snap_path, &snap) {
        std::fs::write(p, b).unwrap();
    }
    ck.save(&final_path).unwrap();
    eprintln!("trained {name} in {:.1} min", t0.elapsed().as_secs_f64() / 60.0);
    (ck, snap)
}

struct Trained {
    main: Vec<Checkpoint>,
    last_tracks: Vec<Checkpoint>,
    dot: Vec<Checkpoint>,
    /// Eval-loss ratio and resume check of seed 0's main model.
    loss_ratio: f64,
    resume_ok: bool,
}

fn train_all(data: &Dataset) -> Trained {
    let base = ModelConfig::default();
    let probe = TrainConfig::default();
    let before = evaluate_loss(&fresh(&base, SEEDS[0]).model, data, &probe, 64, 7).unwrap();
    let (first, snap) = trained("two_mha-0", &base, SEEDS[0], data, Some(STEPS - 100));
    let after = evaluate_loss(&first.model, data, &probe, 64, 7).unwrap();
    let mut resumed = Checkpoint::from_bytes(&snap.expect("snapshot taken")).unwrap();
    while resumed.step < STEPS {
        train_step(&mut resumed, data).unwrap();
    }
    let resume_ok = resumed.to_bytes().unwrap() == first.to_bytes().unwrap();
    let mut main = vec![first];
    for &s in &SEEDS[1..] {
        main.push(trained(&format!("two_mha-{s}"), &base, s, data, None).0);
    }
    let lt = ModelConfig { query: QueryKind::LastTracks, ..base.clone() };
    let dp = ModelConfig { index_kind: IndexKind::DotProduct, ..base };
    let last_tracks = SEEDS
        .iter()
        .map(|&s| trained(&format!("last_tracks-{s}"), &lt, s, data, None).0)
        .collect();
    let dot = SEEDS
        .iter()
        .map(|&s| trained(&format!("dot_product-{s}"), &dp, s, data, None).0)
        .collect();
    Trained {
        main,
        last_tracks,
        dot,
        loss_ratio: after / before,
        resume_ok,
    }
}

fn score(ck: &Checkpoint, test: &Dataset) -> Summary {
    let spec = &test.config.decoder;
    let ic = InferenceConfig::default();
    let preds: Vec<_> = test.videos.iter().map(|v| track_video(v, &ck.model, spec, &ic).unwrap()).collect();
    evaluate(&preds, &test.videos, &EvalConfig::default()).unwrap().aggregate
}

fn training_sanity(t: &Trained) -> Outcome {
    (
        t.loss_ratio <= 0.5 && t.resume_ok,
        format!(
            "eval loss after {STEPS} steps is {:.1}% of step 0; resume from step {} bitwise identical: {}",
            100.0 * t.loss_ratio,
            STEPS - 100,
            t.resume_ok
        ),
    )
}

fn association_quality(main: &[Summary], base: &Summary, occl: f64) -> Outcome {
    let wins = main.iter().filter(|s| s.idf1 >= base.idf1 + 0.05 && s.ids < base.ids).count();
    let each: Vec<String> = main.iter().map(|s| format!("{:.3}/{}", s.idf1, s.ids)).collect();
    (
        wins >= 2,
        format!(
            "IDF1/IDS per seed {}; IoU baseline {:.3}/{}; {wins}/3 seeds win; {:.0}% of held-out videos have occlusions",
            each.join(", "),
            base.idf1,
            base.ids,
            100.0 * occl
        ),
    )
}

fn ablation_ordering(main: &[Summary], lt: &[Summary], dot: &[Summary]) -> Outcome {
    let ok = (0..SEEDS.len())
        .filter(|&i| main[i].idf1 > lt[i].idf1 && main[i].idf1 > dot[i].idf1)
        .count();
    let fmt = |v: &[Summary]| v.iter().map(|s| format!("{:.4}", s.idf1)).collect::<Vec<_>>().join(" ");
    (
        ok >= 2,
        format!(
            "IDF1 two-MHA/rollout [{}], last tracks [{}], dot product [{}]; ordering holds for {ok}/3 seeds",
            fmt(main),
            fmt(lt),
            fmt(dot)
        ),
    )
}

fn occlusion_recovery(ck: &Checkpoint) -> Outcome {
    let sim = SimConfig::default();
    let ic = InferenceConfig::default();
    let (mut ours, mut base) = (0, 0);
    for seed in 0..SCENARIOS {
        let s = occlusion_scenario(&sim, seed, 3).unwrap();
        let kept = |set: &TrackletSet| {
            let a = best_track(set, &s.video.gt[s.before], s.target, s.before, 0.5);
            let b = best_track(set, &s.video.gt[s.after], s.target, s.after, 0.5);
            a.is_some() && a == b
        };
        ours += kept(&track_video(&s.video, &ck.model, &sim.decoder, &ic).unwrap()) as u64;
        base += kept(&baseline_iou_tracker(&s.video, &sim.decoder, &BaselineConfig::default())) as u64;
    }
    (
        ours * 100 >= 80 * SCENARIOS && base < ours,
        format!("original id kept after a 3-frame full occlusion: OC-MOT {ours}/{SCENARIOS}, IoU baseline {base}/{SCENARIOS}"),
    )
}

// ---------------------------------------------------------------- 10

fn pipeline_determinism() -> Outcome {
    let run_all = |dir: &std::path::Path| -> Vec<Vec<u8>> {
        let cfg = RunConfig::default()
            .with_overrides(&[
                "sim.videos=3",
                "sim.frames=32",
                "train.steps=4",
                "train.batch=2",
                "train.log_every=1",
            ])
            .unwrap();
        let mut cfg = RunConfig { seed: 5, ..cfg }.resolve().unwrap();
        cfg.paths.dataset = dir.join("data");
        cfg.paths.checkpoint = dir.join("model");
        cfg.paths.tracklets = dir.join("tracks");
        cfg.paths.report = dir.join("report");
        for c in [Command::Gen, Command::Train, Command::Track, Command::Eval] {
            cli::run(c, &cfg, None).unwrap();
        }
        ["data", "model", "model.loss.tsv", "tracks", "report"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).unwrap())
            .collect()
    };
    // the same directory both times: outputs record the resolved paths
    let dir = tempfile::tempdir().unwrap();
    let x = run_all(dir.path());
    for e in std::fs::read_dir(dir.path()).unwrap() {
        std::fs::remove_file(e.unwrap().path()).unwrap();
    }
    let y = run_all(dir.path());
    let same = x.iter().zip(&y).filter(|(p, q)| p == q).count();
    // and the in-memory pieces
    let sim = SimConfig { videos: 2, frames: 10, ..SimConfig::default() };
    let d1 = generate(&sim, 9).unwrap().to_bytes().unwrap();
    let d2 = generate(&sim, 9).unwrap().to_bytes().unwrap();
    let h = hungarian(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
    (
        same == x.len() && d1 == d2 && h == vec![Some(0), Some(1)],
        format!("gen/train/track/eval outputs identical across two runs: {same}/{} files", x.len()),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("[{}] criterion {n:2} {name}: {}", if o.0 { "PASS" } else { "FAIL" }, o.1);
        results.push((n, name, o));
    };
    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "em-loss oracle", em_loss_oracle());
    report(3, "likelihood consistency", likelihood_consistency());
    report(4, "structural invariants", structural_invariants());
    report(5, "metrics oracles", metrics_oracles());
    report(10, "determinism", pipeline_determinism());

    let data = generate(&SimConfig::default(), TRAIN_DATA_SEED).unwrap();
    let test = generate(&SimConfig { videos: HELD_OUT_VIDEOS, ..SimConfig::default() }, HELD_OUT_SEED).unwrap();
    let trained = train_all(&data);
    report(6, "training sanity", training_sanity(&trained));
    let main_s: Vec<Summary> = trained.main.iter().map(|c| score(c, &test)).collect();
    let lt_s: Vec<Summary> = trained.last_tracks.iter().map(|c| score(c, &test)).collect();
    let dot_s: Vec<Summary> = trained.dot.iter().map(|c| score(c, &test)).collect();
    let spec = &test.config.decoder;
    let base: Vec<_> = test.videos.iter().map(|v| baseline_iou_tracker(v, spec, &BaselineConfig::default())).collect();
    let base_s = evaluate(&base, &test.videos, &EvalConfig::default()).unwrap().aggregate;
    let occl = test.occlusion_rate(test.config.v_min);
    report(7, "association quality", association_quality(&main_s, &base_s, occl));
    report(8, "ablation ordering", ablation_ordering(&main_s, &lt_s, &dot_s));
    report(9, "occlusion recovery", occlusion_recovery(&trained.main[0]));

    results.sort_by_key(|r| r.0);
    let failed: Vec<usize> = results.iter().filter(|r| !r.2 .0).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria pass", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::SimConfig;
use super::decoder::{DecoderSpec, APPEARANCE, COLOR, CX, CY, LOG_SX, LOG_SY};
use super::world::{FrameGt, WorldObject};
use crate::diffcore::Tensor;

/// The N×d slot matrix of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotFrame {
    pub slots: Tensor,
    /// Owning object per slot, `None` for background. Diagnostics only:
    /// training and tracking never read it.
    pub gt_owner: Vec<Option<u32>>,
    pub frame_index: usize,
}

/// Per-object appearance codes, fixed for the lifetime of a video.
#[derive(Clone, Debug, PartialEq)]
pub struct Appearance {
    codes: Vec<(u32, Vec<f64>)>,
}

impl Appearance {
    pub fn draw<R: Rng + ?Sized>(objects: &[WorldObject], dim: usize, std: f64, rng: &mut R) -> Self {
        let n = dim.saturating_sub(APPEARANCE);
        let normal = Normal::new(0.0, std.max(0.0)).expect("std >= 0");
        let codes = objects
            .iter()
            .map(|o| (o.id, (0..n).map(|_| normal.sample(rng)).collect()))
            .collect();
        Self { codes }
    }

    pub fn get(&self, id: u32) -> &[f64] {
        &self
            .codes
            .iter()
            .find(|(i, _)| *i == id)
            .expect("appearance drawn for every object")
            .1
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn clamp_unit(v: f64, what: &str) -> f64 {
    const LO: f64 = 1e-4;
    if v < LO || v > 1.0 - LO {
        warn!("{what} = {v} outside the invertible range; clamping");
    }
    v.clamp(LO, 1.0 - LO)
}

/// Latent whose decode reproduces `obj`'s blob, plus isotropic Gaussian
/// noise of std `noise_scale` on every dimension.
pub fn encode_object<R: Rng + ?Sized>(
    obj: &WorldObject,
    appearance: &[f64],
    spec: &DecoderSpec,
    noise_scale: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut z = vec![0.0; spec.dim];
    z[CX] = logit(clamp_unit(obj.center[0], "center x"));
    z[CY] = logit(clamp_unit(obj.center[1], "center y"));
    for a in 0..2 {
        let ls = obj.log_scale[a];
        if ls < spec.log_scale_min || ls > spec.log_scale_max {
            warn!("log scale {ls} outside decoder range; clamping");
        }
        z[LOG_SX + a] = ls.clamp(spec.log_scale_min, spec.log_scale_max);
    }
    debug_assert_eq!(LOG_SY, LOG_SX + 1);
    for c in 0..3 {
        z[COLOR + c] = logit(clamp_unit(obj.color[c], "color"));
    }
    z[APPEARANCE..].copy_from_slice(&appearance[..spec.dim - APPEARANCE]);
    if noise_scale > 0.0 {
        let normal = Normal::new(0.0, noise_scale).expect("positive std");
        for v in &mut z {
            *v += normal.sample(rng);
        }
    }
    z
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Primary,
    SecondPart,
    Duplicate,
}

/// Left/right halves: centers offset by ±sx/2, sx halved.
pub fn split_parts(obj: &WorldObject) -> [WorldObject; 2] {
    let sx = obj.log_scale[0].exp();
    let mut left = obj.clone();
    let mut right = obj.clone();
    left.center[0] -= sx / 2.0;
    right.center[0] += sx / 2.0;
    left.log_scale[0] = (sx / 2.0).ln();
    right.log_scale[0] = (sx / 2.0).ln();
    [left, right]
}

/// Corrupted slot set for one frame; see [`SimConfig`] for the knobs.
pub fn emit_slots<R: Rng + ?Sized>(
    objects: &[WorldObject],
    gt: &FrameGt,
    cfg: &SimConfig,
    appearance: &Appearance,
    frame_index: usize,
    rng: &mut R,
) -> SlotFrame {
    let spec = &cfg.decoder;
    let noise = cfg.noise_scale;
    let mut emitted: Vec<(Kind, Vec<f64>, Option<u32>)> = Vec::new();
    for obj in objects {
        let app = appearance.get(obj.id);
        let vis = gt.get(obj.id).map_or(0.0, |o| o.visibility);
        if vis >= cfg.v_min {
            if rng.gen_bool(cfg.p_split) {
                let [l, r] = split_parts(obj);
                emitted.push((Kind::Primary, encode_object(&l, app, spec, noise, rng), Some(obj.id)));
                emitted.push((Kind::SecondPart, encode_object(&r, app, spec, noise, rng), Some(obj.id)));
            } else {
                emitted.push((Kind::Primary, encode_object(obj, app, spec, noise, rng), Some(obj.id)));
            }
            if rng.gen_bool(cfg.p_dup) {
                emitted.push((Kind::Duplicate, encode_object(obj, app, spec, noise, rng), Some(obj.id)));
            }
        } else if !rng.gen_bool(cfg.p_miss) {
            emitted.push((Kind::Primary, encode_object(obj, app, spec, noise, rng), Some(obj.id)));
        }
    }
    if emitted.len() > cfg.slots {
        // over capacity: shed duplicates first, then second parts
        emitted.sort_by_key(|e| e.0);
        emitted.truncate(cfg.slots);
    }
    let app_dims = spec.dim - APPEARANCE;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    while emitted.len() < cfg.slots {
        let s = rng.gen_range(cfg.bg_scale[0]..=cfg.bg_scale[1]);
        let bg = WorldObject {
            id: u32::MAX,
            center: [rng.gen_range(0.02..0.98), rng.gen_range(0.02..0.98)],
            velocity: [0.0; 2],
            log_scale: [s.ln(), (s * rng.gen_range(0.8..1.25)).ln()],
            color: [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)],
            depth: f64::INFINITY,
        };
        let code: Vec<f64> = (0..app_dims)
            .map(|_| normal.sample(rng) * cfg.appearance_std)
            .collect();
        emitted.push((Kind::Primary, encode_object(&bg, &code, spec, noise, rng), None));
    }
    emitted.shuffle(rng);
    let mut data = Vec::with_capacity(cfg.slots * spec.dim);
    let mut owners = Vec::with_capacity(cfg.slots);
    for (_, z, owner) in emitted {
        // the container stores f32; quantize now so files round-trip exactly
        data.extend(z.iter().map(|&v| v as f32 as f64));
        owners.push(owner);
    }
    SlotFrame {
        slots: Tensor::new(&[cfg.slots, spec.dim], data).expect("N×d"),
        gt_owner: owners,
        frame_index,
    }
}

#[cfg(test)]
mod tests {
    use super::super::world::{random_objects, render_gt};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clean_cfg() -> SimConfig {
        SimConfig {
            p_split: 0.0,
            p_dup: 0.0,
            p_miss: 0.0,
            noise_scale: 0.0,
            ..SimConfig::default()
        }
    }

    fn two_apart() -> Vec<WorldObject> {
        let mk = |id: u32, x: f64| WorldObject {
            id,
            center: [x, 0.5],
            velocity: [0.0; 2],
            log_scale: [0.08f64.ln(); 2],
            color: [0.3, 0.6, 0.9],
            depth: id as f64,
        };
        vec![mk(0, 0.25), mk(1, 0.75)]
    }

    #[test]
    fn clean_emission_two_objects() {
        let cfg = SimConfig {
            slots: 4,
            ..clean_cfg()
        };
        let objs = two_apart();
        let gt = render_gt(&objs, &cfg.decoder, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let app = Appearance::draw(&objs, cfg.decoder.dim, 1.0, &mut rng);
        let f = emit_slots(&objs, &gt, &cfg, &app, 0, &mut rng);
        assert_eq!(f.slots.shape(), &[4, cfg.decoder.dim]);
        let mut owners: Vec<_> = f.gt_owner.iter().flatten().copied().collect();
        owners.sort();
        assert_eq!(owners, vec![0, 1]);
        assert_eq!(f.gt_owner.iter().filter(|o| o.is_none()).count(), 2);
    }

    #[test]
    fn noiseless_encode_decodes_to_object_mask() {
        let cfg = clean_cfg();
        let spec = &cfg.decoder;
        let o = &two_apart()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let app = Appearance::draw(std::slice::from_ref(o), spec.dim, 1.0, &mut rng);
        let z = encode_object(o, app.get(0), spec, 0.0, &mut rng);
        let b = o.blob();
        let m = spec.mask(&z);
        for row in 0..spec.height {
            for col in 0..spec.width {
                let (x, y) = spec.pixel_center(row, col);
                let u = (x - b.cx) / b.sx;
                let v = (y - b.cy) / b.sy;
                let want = (-0.5 * (u * u + v * v)).exp();
                assert!((m[row * spec.width + col] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn appearance_persists_per_object() {
        let cfg = SimConfig::default();
        let o = &two_apart()[1];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let app = Appearance::draw(std::slice::from_ref(o), cfg.decoder.dim, 1.0, &mut rng);
        let a = encode_object(o, app.get(1), &cfg.decoder, 0.0, &mut rng);
        let b = encode_object(o, app.get(1), &cfg.decoder, 0.0, &mut rng);
        assert_eq!(a[APPEARANCE..], b[APPEARANCE..]);
    }

    #[test]
    fn noise_shifts_decoded_center_by_noise_order() {
        let cfg = SimConfig::default();
        let spec = &cfg.decoder;
        let o = &two_apart()[0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let app = Appearance::draw(std::slice::from_ref(o), spec.dim, 1.0, &mut rng);
        let clean = encode_object(o, app.get(0), spec, 0.0, &mut rng);
        let mut mean_shift = 0.0;
        for _ in 0..200 {
            let z = encode_object(o, app.get(0), spec, 0.1, &mut rng);
            mean_shift += (z[CX] - clean[CX]).abs();
            let dc = (spec.blob(&z).cx - o.center[0]).abs();
            // sigmoid slope is at most 1/4
            assert!(dc <= 0.25 * (z[CX] - clean[CX]).abs() + 1e-12);
        }
        mean_shift /= 200.0;
        // E|N(0, 0.1)| = 0.1 * sqrt(2/pi)
        assert!((mean_shift - 0.0798).abs() < 0.015, "{mean_shift}");
    }

    #[test]
    fn split_parts_cover_object() {
        let cfg = SimConfig {
            p_split: 1.0,
            ..clean_cfg()
        };
        let objs = vec![two_apart()[0].clone()];
        let spec = &cfg.decoder;
        let gt = render_gt(&objs, spec, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let app = Appearance::draw(&objs, spec.dim, 1.0, &mut rng);
        let f = emit_slots(&objs, &gt, &cfg, &app, 0, &mut rng);
        let parts: Vec<usize> = (0..cfg.slots).filter(|&i| f.gt_owner[i] == Some(0)).collect();
        assert_eq!(parts.len(), 2);
        let whole = &gt.objects[0].amodal;
        let mut union = crate::geometry::Mask::empty(spec.height, spec.width);
        for &i in &parts {
            let m = spec.binary_mask(f.slots.row(i), 0.5);
            assert!(m.intersection(whole) > 0);
            assert!(m.iou(whole) > 0.25);
            union.union_with(&m);
        }
        assert!(union.iou(whole) > 0.6, "{}", union.iou(whole));
    }

    #[test]
    fn full_miss_drops_occluded_object() {
        let cfg = SimConfig {
            p_miss: 1.0,
            ..clean_cfg()
        };
        let mut objs = two_apart();
        objs[1].center = objs[0].center;
        objs[1].log_scale = [0.05f64.ln(); 2];
        objs[1].depth = 5.0;
        let gt = render_gt(&objs, &cfg.decoder, 0.5);
        assert_eq!(gt.objects[1].visibility, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let app = Appearance::draw(&objs, cfg.decoder.dim, 1.0, &mut rng);
        let f = emit_slots(&objs, &gt, &cfg, &app, 0, &mut rng);
        assert!(!f.gt_owner.contains(&Some(1)));
        assert!(f.gt_owner.contains(&Some(0)));
    }

    #[test]
    fn clean_slots_match_amodal_masks() {
        let cfg = clean_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let objs = random_objects(&cfg, &mut rng);
        let gt = render_gt(&objs, &cfg.decoder, 0.5);
        let app = Appearance::draw(&objs, cfg.decoder.dim, 1.0, &mut rng);
        let f = emit_slots(&objs, &gt, &cfg, &app, 0, &mut rng);
        for (i, owner) in f.gt_owner.iter().enumerate() {
            if let Some(id) = owner {
                let m = cfg.decoder.binary_mask(f.slots.row(i), 0.5);
                assert!(m.iou(&gt.get(*id).unwrap().amodal) > 0.9);
            }
        }
    }

    #[test]
    fn overflow_sheds_duplicates() {
        let cfg = SimConfig {
            slots: 2,
            objects: 2,
            p_dup: 1.0,
            ..clean_cfg()
        };
        let objs = two_apart();
        let gt = render_gt(&objs, &cfg.decoder, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let app = Appearance::draw(&objs, cfg.decoder.dim, 1.0, &mut rng);
        let f = emit_slots(&objs, &gt, &cfg, &app, 0, &mut rng);
        let mut owners: Vec<_> = f.gt_owner.iter().flatten().copied().collect();
        owners.sort();
        assert_eq!(owners, vec![0, 1]);
    }
}

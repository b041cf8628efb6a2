use std::ops::Range;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;
use super::dataset::{simulate_video, Video};
use super::world::{render_gt, step_world, WorldObject};
use crate::error::{Error, Result};

/// A target passing behind a static occluder, fully hidden for a fixed
/// number of consecutive frames.
#[derive(Clone, Debug)]
pub struct OcclusionScenario {
    pub video: Video,
    pub target: u32,
    pub occluder: u32,
    /// Frames in which the target has zero visibility.
    pub hidden: Range<usize>,
    /// Frame just before `hidden`.
    pub before: usize,
    /// Frame just after `hidden`.
    pub after: usize,
}

/// Frames the target stays clear of the occluder at the start.
const LEAD_FRAMES: usize = 3;
const FRAMES: usize = 32;
const MAX_HIDDEN: usize = 8;
/// Emission visibility floor inside scenarios: only hidden objects drop.
const HIDDEN_VISIBILITY: f64 = 1e-9;
const DISTRACTORS: usize = 2;

fn visibility(objects: &[WorldObject], cfg: &SimConfig, steps: usize, id: u32) -> Vec<f64> {
    let mut objs = objects.to_vec();
    (0..steps)
        .map(|_| {
            let gt = render_gt(&objs, &cfg.decoder, cfg.mask_threshold);
            step_world(&mut objs);
            gt.get(id).map_or(0.0, |o| o.visibility)
        })
        .collect()
}

fn propose<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Vec<WorldObject> {
    let c = [rng.gen_range(0.35..0.65), rng.gen_range(0.35..0.65)];
    let so = rng.gen_range(0.09..=0.1f64);
    let st = rng.gen_range(0.07..=0.085f64);
    let speed = rng.gen_range(cfg.speed[0].max(0.01)..=cfg.speed[1].max(0.01));
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    let dir = [a.cos(), a.sin()];
    // thresholded blob radius is sqrt(2 ln 2) ≈ 1.18 scales; start clear
    // of the occluder for a few frames
    let lead = LEAD_FRAMES as f64 * speed + 1.18 * (so + st);
    let mut color = || [rng.gen_range(0.1..=0.9), rng.gen_range(0.1..=0.9), rng.gen_range(0.1..=0.9)];
    let occluder = WorldObject {
        id: 0,
        center: c,
        velocity: [0.0, 0.0],
        log_scale: [so.ln(); 2],
        color: color(),
        depth: 0.0,
    };
    let target = WorldObject {
        id: 1,
        center: [c[0] - dir[0] * lead, c[1] - dir[1] * lead],
        velocity: [dir[0] * speed, dir[1] * speed],
        log_scale: [st.ln(); 2],
        color: color(),
        depth: 1.0,
    };
    vec![occluder, target]
}

/// Builds the scenario for `seed`: an occluder, a target hidden for
/// exactly `hidden` frames, and distractors drawn away from both. The
/// emission corruption of `cfg` applies, except that exactly the fully
/// hidden objects emit no slot, so the target is missing for `hidden`
/// frames and no longer.
pub fn occlusion_scenario(cfg: &SimConfig, seed: u64, hidden: usize) -> Result<OcclusionScenario> {
    cfg.validate()?;
    if hidden == 0 || hidden > MAX_HIDDEN {
        return Err(Error::Config(format!("cannot build a {hidden}-frame occlusion")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let mut objects = propose(cfg, &mut rng);
        let end = {
            let t = &objects[1];
            let n = FRAMES as f64 - 1.0;
            [t.center[0] + n * t.velocity[0], t.center[1] + n * t.velocity[1]]
        };
        let inside = |p: [f64; 2]| p.iter().all(|&x| (0.08..=0.92).contains(&x));
        if !inside(objects[1].center) || !inside(end) {
            continue;
        }
        let vis = visibility(&objects, cfg, FRAMES, 1);
        let zero: Vec<usize> = (0..FRAMES).filter(|&t| vis[t] == 0.0).collect();
        let (Some(&h0), Some(&h1)) = (zero.first(), zero.last()) else {
            continue;
        };
        if h1 + 1 - h0 != hidden || zero.len() != hidden {
            continue;
        }
        let (before, after) = (h0.wrapping_sub(1), h1 + 1);
        if h0 == 0 || vis[0] < 1.0 || FRAMES - after < 3 {
            continue;
        }
        // distractors keep clear of the occluder and the target's path
        let mut k = 0;
        for _ in 0..1000 {
            if k == DISTRACTORS {
                break;
            }
            let mut d = super::world::random_objects(&SimConfig { objects: 1, ..cfg.clone() }, &mut rng)
                .remove(0);
            let clear = (0..FRAMES).all(|t| {
                let p = [d.center[0] + t as f64 * d.velocity[0], d.center[1] + t as f64 * d.velocity[1]];
                let tp = [
                    objects[1].center[0] + t as f64 * objects[1].velocity[0],
                    objects[1].center[1] + t as f64 * objects[1].velocity[1],
                ];
                let far = |q: [f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt() > 0.3;
                inside(p) && far(objects[0].center) && far(tp)
            });
            if clear {
                d.id = 2 + k as u32;
                d.depth = 2.0 + k as f64;
                objects.push(d);
                k += 1;
            }
        }
        let scfg = SimConfig {
            frames: FRAMES,
            p_miss: 1.0,
            v_min: HIDDEN_VISIBILITY,
            ..cfg.clone()
        };
        let video = simulate_video(&scfg, 0, objects, &mut rng);
        return Ok(OcclusionScenario {
            video,
            target: 1,
            occluder: 0,
            hidden: h0..h1 + 1,
            before,
            after,
        });
    }
    Err(Error::Config("no occlusion geometry found for this configuration".into()))
}

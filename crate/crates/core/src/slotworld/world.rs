use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::decoder::{BlobParams, DecoderSpec};
use crate::geometry::{BBox, Mask};

/// One ground-truth object of the synthetic scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: u32,
    /// Scene units, `[0, 1]²`.
    pub center: [f64; 2],
    /// Scene units per frame.
    pub velocity: [f64; 2],
    pub log_scale: [f64; 2],
    pub color: [f64; 3],
    /// Smaller is nearer the camera.
    pub depth: f64,
}

impl WorldObject {
    pub fn blob(&self) -> BlobParams {
        BlobParams {
            cx: self.center[0],
            cy: self.center[1],
            sx: self.log_scale[0].exp(),
            sy: self.log_scale[1].exp(),
        }
    }
}

fn reflect(p: &mut f64, v: &mut f64) {
    if *p > 1.0 {
        *p = 2.0 - *p;
        *v = -*v;
    } else if *p < 0.0 {
        *p = -*p;
        *v = -*v;
    }
}

/// Constant-velocity motion with elastic reflection at the scene border.
pub fn step_world(objects: &mut [WorldObject]) {
    for o in objects {
        for a in 0..2 {
            o.center[a] += o.velocity[a];
            reflect(&mut o.center[a], &mut o.velocity[a]);
        }
    }
}

/// Draws a fresh set of objects with distinct depths.
pub fn random_objects<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Vec<WorldObject> {
    let mut depths: Vec<f64> = (0..cfg.objects).map(|i| i as f64).collect();
    for i in (1..depths.len()).rev() {
        let j = rng.gen_range(0..=i);
        depths.swap(i, j);
    }
    (0..cfg.objects)
        .map(|i| {
            let speed = rng.gen_range(cfg.speed[0]..=cfg.speed[1]);
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let sx = rng.gen_range(cfg.scale[0]..=cfg.scale[1]);
            let aspect = rng.gen_range(0.8..=1.25);
            WorldObject {
                id: i as u32,
                center: [rng.gen_range(0.1..=0.9), rng.gen_range(0.1..=0.9)],
                velocity: [speed * angle.cos(), speed * angle.sin()],
                log_scale: [sx.ln(), (sx * aspect).ln()],
                color: [
                    rng.gen_range(0.1..=0.9),
                    rng.gen_range(0.1..=0.9),
                    rng.gen_range(0.1..=0.9),
                ],
                depth: depths[i],
            }
        })
        .collect()
}

/// Ground truth of one object in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectGt {
    pub id: u32,
    pub amodal: Mask,
    pub visible: Mask,
    /// `|visible| / |amodal|`, 0 for an empty amodal mask.
    pub visibility: f64,
    pub bbox: Option<BBox>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct FrameGt {
    pub objects: Vec<ObjectGt>,
}

impl FrameGt {
    pub fn get(&self, id: u32) -> Option<&ObjectGt> {
        self.objects.iter().find(|o| o.id == id)
    }
}

pub fn blob_mask(spec: &DecoderSpec, b: &BlobParams, threshold: f64) -> Mask {
    let mut bits = vec![false; spec.pixels()];
    for row in 0..spec.height {
        for col in 0..spec.width {
            let (x, y) = spec.pixel_center(row, col);
            let u = (x - b.cx) / b.sx;
            let v = (y - b.cy) / b.sy;
            bits[row * spec.width + col] = (-0.5 * (u * u + v * v)).exp() >= threshold;
        }
    }
    Mask::from_bits(spec.height, spec.width, bits)
}

/// Visible masks by painter's algorithm: nearer objects cover farther ones.
/// `amodal` and `depth_order` (front to back, as indices into `amodal`).
pub fn visible_masks(amodal: &[Mask], depth_order: &[usize]) -> Vec<Mask> {
    let mut out = amodal.to_vec();
    let Some(first) = amodal.first() else {
        return out;
    };
    let mut covered = Mask::empty(first.height(), first.width());
    for &i in depth_order {
        out[i] = amodal[i].minus(&covered);
        covered.union_with(&amodal[i]);
    }
    out
}

/// Front-to-back ordering of `objects` by depth (indices).
pub fn depth_order(objects: &[WorldObject]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..objects.len()).collect();
    idx.sort_by(|&a, &b| objects[a].depth.total_cmp(&objects[b].depth));
    idx
}

pub fn assemble_gt(ids: &[u32], amodal: Vec<Mask>, depth_order: &[usize]) -> FrameGt {
    let visible = visible_masks(&amodal, depth_order);
    let objects = ids
        .iter()
        .zip(amodal)
        .zip(visible)
        .map(|((&id, amodal), visible)| {
            let a = amodal.area();
            let visibility = if a == 0 {
                0.0
            } else {
                // stored as f32 in the container
                (visible.area() as f64 / a as f64) as f32 as f64
            };
            ObjectGt {
                id,
                bbox: amodal.bbox(),
                amodal,
                visible,
                visibility,
            }
        })
        .collect();
    FrameGt { objects }
}

pub fn render_gt(objects: &[WorldObject], spec: &DecoderSpec, threshold: f64) -> FrameGt {
    let amodal: Vec<Mask> = objects
        .iter()
        .map(|o| blob_mask(spec, &o.blob(), threshold))
        .collect();
    let ids: Vec<u32> = objects.iter().map(|o| o.id).collect();
    assemble_gt(&ids, amodal, &depth_order(objects))
}

//! Video generation and the on-disk dataset container.
//!
//! Container layout: one line of compact JSON (the [`Manifest`]) terminated
//! by `\n`, followed by one binary block per video. Offsets in the manifest
//! are relative to the first byte after the newline. Each block holds, for
//! every frame in order, little-endian f32 values:
//!
//! 1. slots, `N × d` row-major
//! 2. slot owners, `N` values (object id, or -1 for background)
//! 3. for each object in manifest order: amodal mask `H × W` (0/1),
//!    box `x0 y0 x1 y1` in pixels (all -1 when the mask is empty),
//!    visibility fraction
//!
//! Visible masks are not stored; they are re-derived from the amodal masks
//! and the per-video depth order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::SimConfig;
use super::emit::{emit_slots, Appearance, SlotFrame};
use super::world::{assemble_gt, random_objects, render_gt, step_world, FrameGt, WorldObject};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::geometry::{BBox, Mask};

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub index: usize,
    pub object_ids: Vec<u32>,
    /// Object ids front to back.
    pub depth_order: Vec<u32>,
    pub frames: Vec<SlotFrame>,
    pub gt: Vec<FrameGt>,
}

impl Video {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Whether some object drops below `threshold` visibility at some frame.
    pub fn has_occlusion(&self, threshold: f64) -> bool {
        self.gt
            .iter()
            .any(|f| f.objects.iter().any(|o| o.visibility < threshold))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: SimConfig,
    pub seed: u64,
    pub videos: Vec<Video>,
}

/// Per-video RNG stream derived from the master seed.
pub fn video_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Simulates one video from explicit initial objects.
pub fn simulate_video(
    cfg: &SimConfig,
    index: usize,
    mut objects: Vec<WorldObject>,
    rng: &mut ChaCha8Rng,
) -> Video {
    let appearance = Appearance::draw(&objects, cfg.decoder.dim, cfg.appearance_std, rng);
    let mut order: Vec<&WorldObject> = objects.iter().collect();
    order.sort_by(|a, b| a.depth.total_cmp(&b.depth));
    let depth_order = order.iter().map(|o| o.id).collect();
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut gts = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let gt = render_gt(&objects, &cfg.decoder, cfg.mask_threshold);
        frames.push(emit_slots(&objects, &gt, cfg, &appearance, t, rng));
        gts.push(gt);
        step_world(&mut objects);
    }
    Video {
        index,
        object_ids: objects.iter().map(|o| o.id).collect(),
        depth_order,
        frames,
        gt: gts,
    }
}

/// Generates the whole dataset in memory. Same config and seed give a
/// bitwise identical dataset.
pub fn generate(cfg: &SimConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let videos = (0..cfg.videos)
        .map(|i| {
            let mut rng = video_rng(seed, i);
            let objects = random_objects(cfg, &mut rng);
            simulate_video(cfg, i, objects, &mut rng)
        })
        .collect();
    Ok(Dataset {
        config: cfg.clone(),
        seed,
        videos,
    })
}

/// Generates and writes a dataset; returns the file's SHA-256 (hex).
pub fn generate_dataset(cfg: &SimConfig, seed: u64, path: &Path) -> Result<String> {
    let ds = generate(cfg, seed)?;
    ds.save(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub index: usize,
    pub object_ids: Vec<u32>,
    pub depth_order: Vec<u32>,
    pub frames: usize,
    pub offset: u64,
    pub length: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: SimConfig,
    pub videos: Vec<VideoEntry>,
}

pub const FORMAT_NAME: &str = "ocmot-slot-dataset";

fn put(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn encode_video(v: &Video, cfg: &SimConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    for (f, gt) in v.frames.iter().zip(&v.gt) {
        for &x in f.slots.data() {
            put(&mut buf, x);
        }
        for o in &f.gt_owner {
            put(&mut buf, o.map_or(-1.0, |id| id as f64));
        }
        for &id in &v.object_ids {
            let o = gt.get(id).expect("gt for every object");
            for &b in o.amodal.bits() {
                put(&mut buf, if b { 1.0 } else { 0.0 });
            }
            match o.bbox {
                Some(b) => [b.x0, b.y0, b.x1, b.y1].iter().for_each(|&x| put(&mut buf, x)),
                None => (0..4).for_each(|_| put(&mut buf, -1.0)),
            }
            put(&mut buf, o.visibility);
        }
    }
    debug_assert_eq!(buf.len(), video_block_len(cfg, v.object_ids.len(), v.frames.len()));
    buf
}

fn video_block_len(cfg: &SimConfig, objects: usize, frames: usize) -> usize {
    let d = &cfg.decoder;
    let per_frame = cfg.slots * d.dim + cfg.slots + objects * (d.pixels() + 5);
    4 * per_frame * frames
}

struct Floats<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Floats<'_> {
    fn next(&mut self) -> Result<f64> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::Format("truncated video block".into()))?;
        self.pos += 4;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
    }
}

fn decode_video(entry: &VideoEntry, cfg: &SimConfig, bytes: &[u8]) -> Result<Video> {
    let d = &cfg.decoder;
    let mut r = Floats { bytes, pos: 0 };
    let id_pos: Vec<usize> = entry
        .depth_order
        .iter()
        .map(|id| {
            entry
                .object_ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| Error::Format(format!("depth order names unknown object {id}")))
        })
        .collect::<Result<_>>()?;
    let mut frames = Vec::with_capacity(entry.frames);
    let mut gts = Vec::with_capacity(entry.frames);
    for t in 0..entry.frames {
        let mut slots = Vec::with_capacity(cfg.slots * d.dim);
        for _ in 0..cfg.slots * d.dim {
            slots.push(r.next()?);
        }
        let mut owners = Vec::with_capacity(cfg.slots);
        for _ in 0..cfg.slots {
            let o = r.next()?;
            owners.push((o >= 0.0).then_some(o as u32));
        }
        let mut amodal = Vec::with_capacity(entry.object_ids.len());
        let mut extras = Vec::with_capacity(entry.object_ids.len());
        for _ in &entry.object_ids {
            let mut bits = Vec::with_capacity(d.pixels());
            for _ in 0..d.pixels() {
                bits.push(r.next()? > 0.5);
            }
            amodal.push(Mask::from_bits(d.height, d.width, bits));
            let b = [r.next()?, r.next()?, r.next()?, r.next()?];
            let bbox = (b[0] >= 0.0).then_some(BBox {
                x0: b[0],
                y0: b[1],
                x1: b[2],
                y1: b[3],
            });
            extras.push((bbox, r.next()?));
        }
        let mut gt = assemble_gt(&entry.object_ids, amodal, &id_pos);
        for (o, (bbox, vis)) in gt.objects.iter_mut().zip(extras) {
            if o.bbox != bbox {
                return Err(Error::Format(format!("frame {t}: stored box disagrees with mask")));
            }
            o.visibility = vis;
        }
        frames.push(SlotFrame {
            slots: Tensor::new(&[cfg.slots, d.dim], slots)?,
            gt_owner: owners,
            frame_index: t,
        });
        gts.push(gt);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes in video block".into()));
    }
    Ok(Video {
        index: entry.index,
        object_ids: entry.object_ids.clone(),
        depth_order: entry.depth_order.clone(),
        frames,
        gt: gts,
    })
}

impl Dataset {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let blocks: Vec<Vec<u8>> = self
            .videos
            .iter()
            .map(|v| encode_video(v, &self.config))
            .collect();
        let mut offset = 0u64;
        let entries = self
            .videos
            .iter()
            .zip(&blocks)
            .map(|(v, b)| {
                let e = VideoEntry {
                    index: v.index,
                    object_ids: v.object_ids.clone(),
                    depth_order: v.depth_order.clone(),
                    frames: v.frames.len(),
                    offset,
                    length: b.len() as u64,
                };
                offset += b.len() as u64;
                e
            })
            .collect();
        let manifest = Manifest {
            format: FORMAT_NAME.into(),
            version: 1,
            seed: self.seed,
            config: self.config.clone(),
            videos: entries,
        };
        let mut out = serde_json::to_vec(&manifest)?;
        out.push(b'\n');
        for b in blocks {
            out.extend_from_slice(&b);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Format("missing manifest line".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[..nl])?;
        Self::from_parts(manifest, &bytes[nl + 1..])
    }

    fn from_parts(manifest: Manifest, data: &[u8]) -> Result<Self> {
        if manifest.format != FORMAT_NAME {
            return Err(Error::Format(format!("unknown format {:?}", manifest.format)));
        }
        manifest.config.validate()?;
        let cfg = manifest.config;
        let mut videos = Vec::with_capacity(manifest.videos.len());
        for e in &manifest.videos {
            let want = video_block_len(&cfg, e.object_ids.len(), e.frames) as u64;
            if e.length != want {
                return Err(Error::Format(format!("video {} block length {} != {want}", e.index, e.length)));
            }
            let start = e.offset as usize;
            let block = data
                .get(start..start + e.length as usize)
                .ok_or_else(|| Error::Format(format!("video {} block out of range", e.index)))?;
            videos.push(decode_video(e, &cfg, block)?);
        }
        Ok(Self {
            config: cfg,
            seed: manifest.seed,
            videos,
        })
    }

    /// Writes the container; returns its SHA-256 (hex).
    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Format("missing manifest line".into()));
        }
        let manifest: Manifest = serde_json::from_slice(&line[..line.len() - 1])?;
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        Self::from_parts(manifest, &data)
    }

    /// Fraction of videos with at least one object under `threshold` visibility.
    pub fn occlusion_rate(&self, threshold: f64) -> f64 {
        let n = self.videos.iter().filter(|v| v.has_occlusion(threshold)).count();
        n as f64 / self.videos.len().max(1) as f64
    }
}

pub fn file_checksum(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            videos: 2,
            frames: 8,
            ..SimConfig::default()
        }
    }

    #[test]
    fn counts_match_config() {
        let ds = generate(&small(), 7).unwrap();
        assert_eq!(ds.videos.len(), 2);
        for v in &ds.videos {
            assert_eq!(v.frames.len(), 8);
            assert_eq!(v.gt.len(), 8);
            assert_eq!(v.frames[0].slots.shape(), &[12, 32]);
        }
    }

    #[test]
    fn container_round_trip_is_exact() {
        let ds = generate(&small(), 11).unwrap();
        let bytes = ds.to_bytes().unwrap();
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn same_seed_same_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let a = generate_dataset(&small(), 7, &dir.path().join("a.bin")).unwrap();
        let b = generate_dataset(&small(), 7, &dir.path().join("b.bin")).unwrap();
        let c = generate_dataset(&small(), 8, &dir.path().join("c.bin")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(file_checksum(&dir.path().join("a.bin")).unwrap(), a);
        let loaded = Dataset::load(&dir.path().join("a.bin")).unwrap();
        assert_eq!(loaded, generate(&small(), 7).unwrap());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SimConfig {
            p_dup: 1.5,
            ..small()
        };
        assert!(matches!(generate(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let ds = generate(&small(), 1).unwrap();
        let bytes = ds.to_bytes().unwrap();
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn slot_index_carries_no_identity() {
        let cfg = SimConfig {
            videos: 1,
            frames: 64,
            ..SimConfig::default()
        };
        let ds = generate(&cfg, 3).unwrap();
        let mut owners = std::collections::BTreeSet::new();
        for f in &ds.videos[0].frames {
            owners.insert(f.gt_owner[0]);
        }
        assert!(owners.len() >= 3, "{owners:?}");
    }
}

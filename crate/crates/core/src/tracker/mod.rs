//! Inference-time tracking with the trained memory, and the IoU-association
//! baseline fed with the same slots.

mod baseline;
mod inout;
mod io;

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

pub use baseline::{baseline_iou_tracker, BaselineConfig};
pub use inout::{dedup_first_frame, foreground_slots, new_object_candidates, SlotView};
pub use io::{read_tracklets, write_tracklets, TrackletFile};

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Mask};
use crate::indexmerge::{argmax_rows, binarize, index, merge};
use crate::membank::{BufferState, MemoryBank};
use crate::slotworld::{DecoderSpec, Video};
use crate::trainer::Model;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub capacity: usize,
    pub tau_iou: f64,
    pub tau_out: u32,
    pub tau_new: f64,
    pub mask_threshold: f64,
    /// Slots below this mean mask value are treated as background.
    pub mass_floor: f64,
    /// Tracklets whose mean mask value is below this are not reported.
    pub output_mass_floor: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            capacity: 32,
            tau_iou: 0.9,
            tau_out: 5,
            tau_new: 0.2,
            mask_threshold: 0.5,
            mass_floor: 0.004,
            output_mass_floor: 0.004,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_iou", self.tau_iou),
            ("tau_new", self.tau_new),
            ("mask_threshold", self.mask_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} is not in (0, 1)")));
            }
        }
        if self.tau_out == 0 || self.capacity == 0 {
            return Err(Error::Config("tau_out and capacity must be positive".into()));
        }
        Ok(())
    }
}

/// One frame of a tracklet.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackFrame {
    pub frame: usize,
    /// Representation the outputs were decoded from (empty when read back
    /// from a tracklet file).
    pub repr: Vec<f64>,
    pub mask: Mask,
    pub bbox: Option<BBox>,
    pub mass: f64,
}

impl TrackFrame {
    pub fn decode(spec: &DecoderSpec, frame: usize, repr: Vec<f64>, threshold: f64) -> Self {
        let mask = spec.binary_mask(&repr, threshold);
        Self {
            frame,
            bbox: mask.bbox(),
            mass: spec.mask_mass(&repr),
            mask,
            repr,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet {
    pub id: u32,
    pub activated: usize,
    pub terminated: Option<usize>,
    pub frames: Vec<TrackFrame>,
}

impl Tracklet {
    pub fn mean_mass(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().map(|f| f.mass).sum::<f64>() / self.frames.len() as f64
    }

    pub fn at(&self, frame: usize) -> Option<&TrackFrame> {
        self.frames
            .binary_search_by_key(&frame, |f| f.frame)
            .ok()
            .map(|i| &self.frames[i])
    }
}

/// Tracker output for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackletSet {
    pub video: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub tracks: Vec<Tracklet>,
}

impl TrackletSet {
    /// Drops tracklets with mean mask value below `floor`.
    pub fn suppress_below(mut self, floor: f64) -> Self {
        self.tracks.retain(|t| t.mean_mass() >= floor);
        self
    }

    pub fn track(&self, id: u32) -> Option<&Tracklet> {
        self.tracks.iter().find(|t| t.id == id)
    }
}

/// Outcome of one tracked frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameAssignment {
    pub frame: usize,
    /// `(slot row, buffer id)` for slots that joined an existing buffer.
    pub assigned: Vec<(usize, u32)>,
    /// `(slot row, buffer id)` for slots that activated a buffer.
    pub activated: Vec<(usize, u32)>,
    pub missed: Vec<u32>,
    pub terminated: Vec<u32>,
    /// New-object candidates dropped for lack of capacity.
    pub dropped: usize,
}

/// Per-video tracking state.
pub struct Tracker<'a> {
    model: &'a Model,
    spec: &'a DecoderSpec,
    cfg: &'a InferenceConfig,
    bank: MemoryBank<Vec<f64>>,
    /// Masks new slots are compared against: last timestep's rollout plus
    /// the init masks of buffers activated then.
    reference: Vec<Mask>,
    t: usize,
    tracks: BTreeMap<u32, Tracklet>,
}

impl<'a> Tracker<'a> {
    pub fn new(model: &'a Model, spec: &'a DecoderSpec, cfg: &'a InferenceConfig) -> Result<Self> {
        cfg.validate()?;
        if spec.dim != model.config.dim {
            return Err(Error::Shape(format!(
                "decoder dim {} vs model dim {}",
                spec.dim, model.config.dim
            )));
        }
        Ok(Self {
            model,
            spec,
            cfg,
            bank: MemoryBank::new(cfg.capacity, model.config.t_max, cfg.tau_out)?,
            reference: Vec::new(),
            t: 0,
            tracks: BTreeMap::new(),
        })
    }

    pub fn bank(&self) -> &MemoryBank<Vec<f64>> {
        &self.bank
    }

    fn emit(&mut self, id: u32, repr: Vec<f64>) {
        let tf = TrackFrame::decode(self.spec, self.t, repr, self.cfg.mask_threshold);
        self.tracks
            .entry(id)
            .or_insert_with(|| Tracklet {
                id,
                activated: self.t,
                terminated: None,
                frames: Vec::new(),
            })
            .frames
            .push(tf);
    }

    fn activate(&mut self, slots: &Tensor, views: &[SlotView], picks: &[usize], out: &mut FrameAssignment) {
        for &k in picks {
            let repr = slots.row(views[k].row).to_vec();
            match self.bank.activate(repr.clone(), self.t) {
                Ok(id) => {
                    let id = id as u32;
                    out.activated.push((views[k].row, id));
                    self.reference.push(views[k].mask.clone());
                    self.emit(id, repr);
                }
                Err(_) => {
                    warn!("frame {}: memory full, dropping a new object", self.t);
                    out.dropped += 1;
                }
            }
        }
    }

    /// Processes the next frame's slots.
    pub fn step(&mut self, slots: &Tensor) -> Result<FrameAssignment> {
        if slots.cols() != self.spec.dim {
            return Err(Error::Shape(format!("slots {:?} for dim {}", slots.shape(), self.spec.dim)));
        }
        let cfg = self.cfg;
        let mut out = FrameAssignment {
            frame: self.t,
            ..FrameAssignment::default()
        };
        let views = foreground_slots(self.spec, slots, cfg.mask_threshold, cfg.mass_floor);
        let masks: Vec<&Mask> = views.iter().map(|v| &v.mask).collect();
        if self.t == 0 {
            let keep = dedup_first_frame(&masks, cfg.tau_iou);
            self.activate(slots, &views, &keep, &mut out);
            self.t += 1;
            return Ok(out);
        }
        let reference: Vec<&Mask> = self.reference.iter().collect();
        let fresh = new_object_candidates(&masks, &reference, cfg.tau_new, cfg.tau_iou);
        let assoc: Vec<usize> = (0..views.len()).filter(|k| !fresh.contains(k)).collect();
        let live = self.bank.live_ids();
        let mut next_reference = Vec::new();
        if !live.is_empty() {
            let mut g = Graph::new();
            let seqs: Vec<Vec<Var>> = live
                .iter()
                .map(|&id| {
                    Ok(self
                        .bank
                        .entries(id)?
                        .iter()
                        .map(|e| g.input(Tensor::row_vector(e)))
                        .collect())
                })
                .collect::<Result<_>>()?;
            let mem = self.model.memory_rows(&mut g, &seqs)?;
            for j in 0..live.len() {
                next_reference.push(self.spec.binary_mask(g.value(mem).row(j), cfg.mask_threshold));
            }
            let mut hits = vec![false; live.len()];
            if !assoc.is_empty() {
                let rows: Vec<usize> = assoc.iter().map(|&k| views[k].row).collect();
                let s = g.input(slots.select_rows(&rows));
                let soft = index(&mut g, &self.model.store, &self.model.assoc, s, mem)?;
                let hard = binarize(g.value(soft));
                let owner = argmax_rows(&hard);
                let hard = g.input(hard);
                let merged = merge(&mut g, &self.model.store, &self.model.assoc, s, mem, hard)?;
                for (k, &j) in owner.iter().enumerate() {
                    out.assigned.push((rows[k], live[j] as u32));
                    hits[j] = true;
                }
                for (j, &id) in live.iter().enumerate() {
                    if hits[j] {
                        let repr = g.value(merged.merged).row(j).to_vec();
                        self.bank.write(id, repr.clone(), self.t)?;
                        self.emit(id as u32, repr);
                    }
                }
            }
            for (j, &id) in live.iter().enumerate() {
                if !hits[j] {
                    out.missed.push(id as u32);
                    if self.bank.mark_missed(id)? == BufferState::Terminated {
                        out.terminated.push(id as u32);
                        if let Some(tr) = self.tracks.get_mut(&(id as u32)) {
                            tr.terminated = Some(self.t);
                        }
                    }
                }
            }
        }
        self.reference = next_reference;
        self.activate(slots, &views, &fresh, &mut out);
        self.t += 1;
        Ok(out)
    }

    pub fn finish(self, video: usize) -> TrackletSet {
        TrackletSet {
            video,
            frames: self.t,
            height: self.spec.height,
            width: self.spec.width,
            tracks: self.tracks.into_values().collect(),
        }
    }
}

/// Tracks every frame of `video`; low-mass tracklets are suppressed.
pub fn track_video(video: &Video, model: &Model, spec: &DecoderSpec, cfg: &InferenceConfig) -> Result<TrackletSet> {
    let (set, _) = track_video_with_log(video, model, spec, cfg)?;
    Ok(set)
}

/// [`track_video`] plus the per-frame assignments.
pub fn track_video_with_log(
    video: &Video,
    model: &Model,
    spec: &DecoderSpec,
    cfg: &InferenceConfig,
) -> Result<(TrackletSet, Vec<FrameAssignment>)> {
    let mut tr = Tracker::new(model, spec, cfg)?;
    let mut log = Vec::with_capacity(video.len());
    for f in &video.frames {
        log.push(tr.step(&f.slots)?);
    }
    Ok((tr.finish(video.index).suppress_below(cfg.output_mass_floor), log))
}

use serde::{Deserialize, Serialize};

use super::inout::{dedup_first_frame, foreground_slots};
use super::{TrackFrame, Tracklet, TrackletSet};
use crate::geometry::{BBox, Mask};
use crate::slotworld::{DecoderSpec, Video};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// A detection joins a track only when their box IoU exceeds this.
    pub gate: f64,
    pub tau_out: u32,
    pub tau_iou: f64,
    pub mask_threshold: f64,
    pub mass_floor: f64,
    pub output_mass_floor: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            gate: 0.3,
            tau_out: 5,
            tau_iou: 0.9,
            mask_threshold: 0.5,
            mass_floor: 0.004,
            output_mass_floor: 0.004,
        }
    }
}

struct Open {
    id: u32,
    bbox: BBox,
    missed: u32,
}

/// Greedy frame-to-frame association of decoded slot boxes by IoU.
///
/// Each frame, the foreground slots (deduplicated like a first frame) are
/// matched to open tracks in order of decreasing box IoU, considering only
/// pairs above the gate. Unmatched detections open new tracks; tracks
/// missing for more than `tau_out` frames close.
pub fn baseline_iou_tracker(video: &Video, spec: &DecoderSpec, cfg: &BaselineConfig) -> TrackletSet {
    let mut open: Vec<Open> = Vec::new();
    let mut tracks: Vec<Tracklet> = Vec::new();
    for (t, f) in video.frames.iter().enumerate() {
        let views = foreground_slots(spec, &f.slots, cfg.mask_threshold, cfg.mass_floor);
        let masks: Vec<&Mask> = views.iter().map(|v| &v.mask).collect();
        let dets: Vec<(usize, BBox)> = dedup_first_frame(&masks, cfg.tau_iou)
            .into_iter()
            .filter_map(|k| views[k].mask.bbox().map(|b| (views[k].row, b)))
            .collect();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (oi, o) in open.iter().enumerate() {
            for (di, (_, b)) in dets.iter().enumerate() {
                let iou = o.bbox.iou(b);
                if iou > cfg.gate {
                    pairs.push((iou, oi, di));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut track_used = vec![false; open.len()];
        let mut det_used = vec![false; dets.len()];
        let emit = |tracks: &mut Vec<Tracklet>, id: u32, row: usize| {
            let tf = TrackFrame::decode(spec, t, f.slots.row(row).to_vec(), cfg.mask_threshold);
            tracks[id as usize].frames.push(tf);
        };
        for (_, oi, di) in pairs {
            if track_used[oi] || det_used[di] {
                continue;
            }
            track_used[oi] = true;
            det_used[di] = true;
            open[oi].bbox = dets[di].1;
            open[oi].missed = 0;
            emit(&mut tracks, open[oi].id, dets[di].0);
        }
        for (oi, o) in open.iter_mut().enumerate() {
            if !track_used[oi] {
                o.missed += 1;
                if o.missed > cfg.tau_out {
                    tracks[o.id as usize].terminated = Some(t);
                }
            }
        }
        open.retain(|o| o.missed <= cfg.tau_out);
        for (di, &(row, bbox)) in dets.iter().enumerate() {
            if det_used[di] {
                continue;
            }
            let id = tracks.len() as u32;
            tracks.push(Tracklet {
                id,
                activated: t,
                terminated: None,
                frames: Vec::new(),
            });
            open.push(Open { id, bbox, missed: 0 });
            emit(&mut tracks, id, row);
        }
    }
    TrackletSet {
        video: video.index,
        frames: video.len(),
        height: spec.height,
        width: spec.width,
        tracks,
    }
    .suppress_below(cfg.output_mass_floor)
}

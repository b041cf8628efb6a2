//! Tracking metrics: CLEAR-MOT, IDF1, track mAP and FG-ARI.
//!
//! The matching gate is an IoU *distance*: a prediction may match a GT
//! object when `1 - IoU ≤ gate`.

mod ari;
mod clear;
mod hungarian;
mod sequence;
mod trackmap;


use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

pub use ari::adjusted_rand_index;
pub use clear::{clear_mot, clear_mot_with, frame_matches, idf1, ClearMot, IdScores};
pub use hungarian::hungarian;
pub use sequence::{FramePairs, Obs, Region, Sequence};
pub use trackmap::{average_precision, iou_3d, ranked_hits, track_map};

use crate::error::{Error, Result};
use crate::slotworld::{FrameGt, Video};
use crate::tracker::TrackletSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Largest admissible IoU distance for a match.
    pub gate: f64,
    /// GT objects below this visibility are not evaluated in that frame.
    pub min_visibility: f64,
    /// Compare masks (true) or boxes (false).
    pub use_masks: bool,
    /// 3D IoU threshold for track mAP.
    pub map_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gate: 0.7,
            min_visibility: 0.3,
            use_masks: true,
            map_threshold: 0.5,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate > 0.0 && self.gate <= 1.0) {
            return Err(Error::Config(format!("gate {} is not in (0, 1]", self.gate)));
        }
        if !(0.0..=1.0).contains(&self.min_visibility) || !(0.0..=1.0).contains(&self.map_threshold) {
            return Err(Error::Config("visibility and mAP thresholds must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoEval {
    pub video: usize,
    pub clear: ClearMot,
    pub id: IdScores,
    pub track_map: Option<f64>,
    pub fg_ari: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub idf1: f64,
    pub mota: f64,
    pub mt: f64,
    pub ml: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub track_map: Option<f64>,
    pub fg_ari: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub aggregate: Summary,
    pub videos: Vec<VideoEval>,
}

/// Per-pixel instance labels over GT foreground pixels of every frame.
/// GT labels come from visible masks; a predicted pixel belongs to the
/// smallest predicted mask covering it (label 0 when uncovered).
pub fn foreground_labels(pred: &TrackletSet, gt: &[FrameGt]) -> (Vec<u32>, Vec<u32>) {
    let mut gl = Vec::new();
    let mut pl = Vec::new();
    for (t, f) in gt.iter().enumerate() {
        let Some(first) = f.objects.first() else {
            continue;
        };
        let (h, w) = (first.visible.height(), first.visible.width());
        let mut preds: Vec<(usize, u32, &crate::geometry::Mask)> = pred
            .tracks
            .iter()
            .filter_map(|tr| tr.at(t).map(|tf| (tf.mask.area(), tr.id, &tf.mask)))
            .collect();
        preds.sort_by_key(|&(a, id, _)| (a, id));
        for y in 0..h {
            for x in 0..w {
                let Some(o) = f.objects.iter().find(|o| o.visible.get(y, x)) else {
                    continue;
                };
                gl.push(o.id + 1);
                let p = preds
                    .iter()
                    .find(|(_, _, m)| m.height() == h && m.width() == w && m.get(y, x))
                    .map_or(0, |&(_, id, _)| id + 1);
                pl.push(p);
            }
        }
    }
    (gl, pl)
}

/// Track whose mask best overlaps the amodal mask of GT object `id` in
/// frame `t`, if that IoU reaches `min_iou`. Ties go to the lower id.
pub fn best_track(pred: &TrackletSet, gt: &FrameGt, id: u32, t: usize, min_iou: f64) -> Option<u32> {
    let target = &gt.get(id)?.amodal;
    let mut best: Option<(f64, u32)> = None;
    let mut tracks: Vec<_> = pred.tracks.iter().collect();
    tracks.sort_by_key(|tr| tr.id);
    for tr in tracks {
        if let Some(f) = tr.at(t) {
            let iou = f.mask.iou(target);
            if iou >= min_iou && best.map_or(true, |(b, _)| iou > b) {
                best = Some((iou, tr.id));
            }
        }
    }
    best.map(|(_, id)| id)
}

pub fn fg_ari(pred: &TrackletSet, gt: &[FrameGt]) -> Option<f64> {
    let (g, p) = foreground_labels(pred, gt);
    adjusted_rand_index(&g, &p)
}

pub fn evaluate_video(pred: &TrackletSet, gt: &[FrameGt], cfg: &EvalConfig) -> Result<VideoEval> {
    if pred.frames != gt.len() {
        return Err(Error::Shape(format!(
            "video {}: {} predicted frames vs {} GT frames",
            pred.video,
            pred.frames,
            gt.len()
        )));
    }
    if let Some(tr) = pred.tracks.iter().find(|t| t.frames.last().is_some_and(|f| f.frame >= gt.len())) {
        return Err(Error::Shape(format!("video {}: track {} runs past the video", pred.video, tr.id)));
    }
    let seq = Sequence::from_tracks(pred, gt, cfg.min_visibility, cfg.use_masks);
    let scores: BTreeMap<u32, f64> = pred.tracks.iter().map(|t| (t.id, t.mean_mass())).collect();
    let fg = fg_ari(pred, gt);
    if fg.is_none() {
        warn!("video {}: no foreground pixels, FG-ARI skipped", pred.video);
    }
    Ok(VideoEval {
        video: pred.video,
        clear: clear_mot(&seq, cfg.gate),
        id: idf1(&seq, cfg.gate),
        track_map: track_map(&seq, &scores, cfg.map_threshold),
        fg_ari: fg,
    })
}

/// Evaluates each prediction against the video with the same index.
pub fn evaluate(preds: &[TrackletSet], videos: &[Video], cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut evals = Vec::with_capacity(preds.len());
    let mut hits = Vec::new();
    let mut num_gt = 0;
    for p in preds {
        let v = videos
            .iter()
            .find(|v| v.index == p.video)
            .ok_or_else(|| Error::Shape(format!("no video {} in the dataset", p.video)))?;
        let e = evaluate_video(p, &v.gt, cfg)?;
        let seq = Sequence::from_tracks(p, &v.gt, cfg.min_visibility, cfg.use_masks);
        let scores: BTreeMap<u32, f64> = p.tracks.iter().map(|t| (t.id, t.mean_mass())).collect();
        let (h, n) = ranked_hits(&seq, &scores, cfg.map_threshold);
        hits.extend(h);
        num_gt += n;
        evals.push(e);
    }
    let sum = |f: &dyn Fn(&VideoEval) -> usize| evals.iter().map(f).sum::<usize>();
    let (fp, fn_, ids) = (sum(&|e| e.clear.fp), sum(&|e| e.clear.fn_), sum(&|e| e.clear.ids));
    let gt_total = sum(&|e| e.clear.gt_total);
    let traj = sum(&|e| e.clear.trajectories);
    let frac = |k: usize| if traj == 0 { 0.0 } else { k as f64 / traj as f64 };
    let aris: Vec<f64> = evals.iter().filter_map(|e| e.fg_ari).collect();
    let aggregate = Summary {
        idf1: clear::idf1_from(sum(&|e| e.id.idtp), sum(&|e| e.id.gt_total), sum(&|e| e.id.pred_total)),
        mota: clear::mota(fp, fn_, ids, gt_total),
        mt: frac(sum(&|e| e.clear.mostly_tracked)),
        ml: frac(sum(&|e| e.clear.mostly_lost)),
        fp,
        fn_,
        ids,
        track_map: average_precision(&hits, num_gt),
        fg_ari: (!aris.is_empty()).then(|| aris.iter().sum::<f64>() / aris.len() as f64),
    };
    Ok(EvalReport {
        config: cfg.clone(),
        aggregate,
        videos: evals,
    })
}

impl EvalReport {
    /// Key-value lines followed by a JSON block.
    pub fn to_text(&self) -> Result<String> {
        let a = &self.aggregate;
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6}"));
        let mut s = String::new();
        let _ = writeln!(s, "videos = {}", self.videos.len());
        let _ = writeln!(s, "gate = {}", self.config.gate);
        let _ = writeln!(s, "match_on = {}", if self.config.use_masks { "mask" } else { "box" });
        let _ = writeln!(s, "IDF1 = {:.6}", a.idf1);
        let _ = writeln!(s, "MOTA = {:.6}", a.mota);
        let _ = writeln!(s, "MT = {:.6}", a.mt);
        let _ = writeln!(s, "ML = {:.6}", a.ml);
        let _ = writeln!(s, "FP = {}", a.fp);
        let _ = writeln!(s, "FN = {}", a.fn_);
        let _ = writeln!(s, "IDS = {}", a.ids);
        let _ = writeln!(s, "TrackMAP = {}", opt(a.track_map));
        let _ = writeln!(s, "FG-ARI = {}", opt(a.fg_ari));
        let _ = writeln!(s, "--- json ---");
        s.push_str(&serde_json::to_string_pretty(self)?);
        s.push('\n');
        Ok(s)
    }
}

use std::io::Write as _;
use std::path::{Path, PathBuf};

use log::info;

use super::config::{RunConfig, TrackMethod};
use super::viz::render_frame;
use crate::error::{Error, Result};
use crate::indexmerge::IndexKind;
use crate::motmetrics::evaluate;
use crate::slotworld::{generate_dataset, Dataset};
use crate::tracker::{
    baseline_iou_tracker, read_tracklets, track_video, write_tracklets, TrackletFile, TrackletSet,
};
use crate::trainer::{train, Checkpoint, Model, QueryKind, TrainOutputs};

/// A missing input is a usage problem, not a runtime failure.
fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} does not exist", path.display())))
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    require(path, "dataset")?;
    Dataset::load(path)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path, "checkpoint")?;
    Checkpoint::load(path)
}

fn load_tracklets(path: &Path) -> Result<TrackletFile> {
    require(path, "tracklet file")?;
    read_tracklets(&std::fs::read_to_string(path)?)
}

fn pick(out: Option<&Path>, default: &Path) -> PathBuf {
    out.unwrap_or(default).to_path_buf()
}

/// Generates the synthetic benchmark. Returns the SHA-256 of the file.
pub fn cmd_gen(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let path = pick(out, &cfg.paths.dataset);
    let sum = generate_dataset(&cfg.sim, cfg.seed, &path)?;
    info!("wrote {} videos to {}", cfg.sim.videos, path.display());
    Ok(format!("{}  {}", sum, path.display()))
}

/// Loss curve path next to a checkpoint.
pub fn curve_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".loss.tsv");
    PathBuf::from(s)
}

/// Trains a fresh model, or continues `paths.resume` up to `train.steps`.
/// Writes the checkpoint and a tab-separated loss curve beside it.
pub fn cmd_train(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let data = load_dataset(&cfg.paths.dataset)?;
    let path = pick(out, &cfg.paths.checkpoint);
    let curve = curve_path(&path);
    let mut ck = match &cfg.paths.resume {
        Some(r) => {
            let mut ck = load_checkpoint(r)?;
            if cfg.train.steps < ck.step {
                return Err(Error::Config(format!(
                    "checkpoint is at step {}, past train.steps = {}",
                    ck.step, cfg.train.steps
                )));
            }
            ck.train.steps = cfg.train.steps;
            ck
        }
        None => {
            let mut f = std::fs::File::create(&curve)?;
            writeln!(f, "# config {}", cfg.to_json())?;
            Checkpoint::new(Model::init(cfg.model.clone(), cfg.seed)?, cfg.train.clone())
        }
    };
    let outs = TrainOutputs {
        curve: Some(&curve),
        checkpoint: Some(&path),
    };
    let c = train(&mut ck, &data, &outs)?;
    ck.save(&path)?;
    let last = c.points.last().map_or("n/a".to_string(), |p| format!("{:.6}", p.1));
    Ok(format!("step {} loss {last} -> {}", ck.step, path.display()))
}

/// Runs the configured tracking method over every video of the dataset.
pub fn track_all(cfg: &RunConfig, data: &Dataset, ck: Option<&Checkpoint>) -> Result<Vec<TrackletSet>> {
    let spec = &data.config.decoder;
    let method = cfg.track.method;
    if method == TrackMethod::IouBaseline {
        return Ok(data
            .videos
            .iter()
            .map(|v| baseline_iou_tracker(v, spec, &cfg.baseline))
            .collect());
    }
    cfg.inference.validate()?;
    let ck = ck.ok_or_else(|| Error::Config(format!("method {} needs a checkpoint", method.name())))?;
    let mut model = ck.model.clone();
    match method {
        TrackMethod::OcmotLastTracks => model.config.query = QueryKind::LastTracks,
        TrackMethod::IndexVariant if model.config.index_kind == IndexKind::TwoMha => {
            return Err(Error::Config(
                "index_variant needs a checkpoint trained with another index kind".into(),
            ))
        }
        _ => {}
    }
    if spec.dim != model.config.dim {
        return Err(Error::Config(format!(
            "dataset latent dim {} vs model dim {}",
            spec.dim, model.config.dim
        )));
    }
    data.videos
        .iter()
        .map(|v| track_video(v, &model, spec, &cfg.inference))
        .collect()
}

pub fn cmd_track(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let data = load_dataset(&cfg.paths.dataset)?;
    let ck = match cfg.track.method {
        TrackMethod::IouBaseline => None,
        _ => Some(load_checkpoint(&cfg.paths.checkpoint)?),
    };
    let videos = track_all(cfg, &data, ck.as_ref())?;
    let n: usize = videos.iter().map(|v| v.tracks.len()).sum();
    let file = TrackletFile {
        method: cfg.track.method.name().to_string(),
        config: cfg.to_json(),
        videos,
    };
    let path = pick(out, &cfg.paths.tracklets);
    std::fs::write(&path, write_tracklets(&file, cfg.track.with_masks))?;
    Ok(format!("{n} tracklets over {} videos -> {}", file.videos.len(), path.display()))
}

/// Checks that the tracklets describe videos of this dataset.
fn check_match(file: &TrackletFile, data: &Dataset) -> Result<()> {
    let spec = &data.config.decoder;
    for set in &file.videos {
        let v = data
            .videos
            .iter()
            .find(|v| v.index == set.video)
            .ok_or_else(|| Error::Config(format!("tracklets name video {} which the dataset lacks", set.video)))?;
        if set.frames != v.len() || set.height != spec.height || set.width != spec.width {
            return Err(Error::Config(format!(
                "video {}: tracklets are {}x{}x{}, dataset is {}x{}x{}",
                set.video,
                set.frames,
                set.height,
                set.width,
                v.len(),
                spec.height,
                spec.width
            )));
        }
    }
    Ok(())
}

/// Scores a tracklet file. The report goes to `out` (or `paths.report`);
/// the returned text is the key-value summary.
pub fn cmd_eval(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let data = load_dataset(&cfg.paths.dataset)?;
    let file = load_tracklets(&cfg.paths.tracklets)?;
    check_match(&file, &data)?;
    let maskless = file
        .videos
        .iter()
        .flat_map(|v| &v.tracks)
        .flat_map(|t| &t.frames)
        .any(|f| f.bbox.is_some() && f.mask.is_empty());
    if cfg.eval.use_masks && maskless {
        return Err(Error::Config("tracklets carry no masks; set eval.use_masks=false".into()));
    }
    let report = evaluate(&file.videos, &data.videos, &cfg.eval)?;
    let text = format!("# method {}\n# config {}\n{}", file.method, cfg.to_json(), report.to_text()?);
    let path = pick(out, &cfg.paths.report);
    std::fs::write(&path, &text)?;
    let summary: String = text
        .lines()
        .skip(2)
        .take_while(|l| *l != "--- json ---")
        .map(|l| format!("{l}\n"))
        .collect();
    Ok(summary)
}

/// Writes one PNG per frame, `v{video}_f{frame}.png`, plus the resolved
/// config as `config.json`.
pub fn cmd_viz(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    let data = load_dataset(&cfg.paths.dataset)?;
    let file = load_tracklets(&cfg.paths.tracklets)?;
    check_match(&file, &data)?;
    let dir = pick(out, &cfg.paths.viz);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.json"), cfg.to_json())?;
    let mut count = 0;
    for set in &file.videos {
        if !cfg.viz.videos.is_empty() && !cfg.viz.videos.contains(&set.video) {
            continue;
        }
        let video = data.videos.iter().find(|v| v.index == set.video).expect("checked");
        for t in 0..set.frames {
            let gt = cfg.viz.show_gt.then(|| &video.gt[t]);
            let img = render_frame(set, t, gt, cfg.viz.scale);
            let p = dir.join(format!("v{:04}_f{:04}.png", set.video, t));
            img.save(&p).map_err(|e| Error::Io(std::io::Error::other(e)))?;
            count += 1;
        }
    }
    Ok(format!("{count} images -> {}", dir.display()))
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::motmetrics::EvalConfig;
use crate::slotworld::SimConfig;
use crate::tracker::{BaselineConfig, InferenceConfig};
use crate::trainer::{ModelConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackMethod {
    /// Rollout queries, the checkpoint's own index.
    Ocmot,
    /// The checkpoint's model queried with the last stored entry per buffer.
    OcmotLastTracks,
    /// Greedy box-IoU matching of decoded slots; needs no checkpoint.
    IouBaseline,
    /// A checkpoint trained with a non-default index kind.
    IndexVariant,
}

impl TrackMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ocmot => "ocmot",
            Self::OcmotLastTracks => "ocmot_last_tracks",
            Self::IouBaseline => "iou_baseline",
            Self::IndexVariant => "index_variant",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackSettings {
    pub method: TrackMethod,
    /// Store run-length masks in the tracklet file.
    pub with_masks: bool,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self {
            method: TrackMethod::Ocmot,
            with_masks: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizConfig {
    /// Output pixels per mask pixel.
    pub scale: u32,
    /// Videos to render; all when empty.
    pub videos: Vec<usize>,
    /// Shade ground-truth visible regions under the tracks.
    pub show_gt: bool,
}

impl Default for VizConfig {
    fn default() -> Self {
        Self {
            scale: 8,
            videos: Vec::new(),
            show_gt: false,
        }
    }
}

/// Default locations of every artifact; `--out` replaces the output of
/// the command being run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    /// Continue training from this checkpoint instead of a fresh model.
    pub resume: Option<PathBuf>,
    pub tracklets: PathBuf,
    pub report: PathBuf,
    pub viz: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: "data.ocmot".into(),
            checkpoint: "model.ckpt".into(),
            resume: None,
            tracklets: "tracks.txt".into(),
            report: "report.txt".into(),
            viz: "viz".into(),
        }
    }
}

/// Everything a run needs. `seed` is the master seed: it seeds dataset
/// generation, model initialization and clip sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub track: TrackSettings,
    pub viz: VizConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sim: SimConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            baseline: BaselineConfig::default(),
            eval: EvalConfig::default(),
            track: TrackSettings::default(),
            viz: VizConfig::default(),
            paths: Paths::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Parses `value` as JSON, falling back to a plain string so that
/// `--set track.method=iou_baseline` needs no quoting.
fn parse_value(value: &str) -> Value {
    serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()))
}

/// Sets the dotted `key` in a JSON document. Every segment must already
/// exist, so misspelled keys are rejected instead of silently added.
pub fn set_path(doc: &mut Value, key: &str, value: &str) -> Result<()> {
    let mut cur = doc;
    for seg in key.split('.') {
        cur = match cur {
            Value::Object(m) => m.get_mut(seg),
            Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
    }
    *cur = parse_value(value);
    Ok(())
}

impl RunConfig {
    /// Reads a JSON document; absent fields take their defaults.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Applies `key=value` overrides in order.
    pub fn with_overrides<S: AsRef<str>>(self, sets: &[S]) -> Result<Self> {
        if sets.is_empty() {
            return Ok(self);
        }
        let mut doc = serde_json::to_value(&self)?;
        for s in sets {
            let s = s.as_ref();
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
            set_path(&mut doc, k.trim(), v.trim())?;
        }
        serde_json::from_value(doc).map_err(config_err)
    }

    /// Propagates the master seed and checks every section.
    pub fn resolve(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.sim.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.inference.validate()?;
        self.eval.validate()?;
        if self.viz.scale == 0 {
            return Err(Error::Config("viz.scale must be positive".into()));
        }
        Ok(self)
    }
}

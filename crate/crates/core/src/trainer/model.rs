use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::diffcore::{Adam, AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::indexmerge::{AssocParams, IndexKind};
use crate::membank::{RolloutConfig, RolloutModel};

/// What the index attends to on the memory side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    /// Rollout predictions of the memory.
    Rollout,
    /// The most recent stored entry of each buffer.
    LastTracks,
}

impl std::str::FromStr for QueryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rollout" => Ok(Self::Rollout),
            "last_tracks" => Ok(Self::LastTracks),
            _ => Err(Error::Config(format!("unknown query kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub dim: usize,
    pub t_max: usize,
    pub rollout: RolloutConfig,
    pub index_kind: IndexKind,
    pub query: QueryKind,
    /// Heads of the index and merge attention blocks.
    pub heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            t_max: 6,
            rollout: RolloutConfig::default(),
            index_kind: IndexKind::TwoMha,
            query: QueryKind::Rollout,
            heads: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_max < 2 {
            return Err(Error::Config(format!("t_max {} < 2", self.t_max)));
        }
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "{} heads do not divide dim {}",
                self.heads, self.dim
            )));
        }
        self.rollout.validate()
    }
}

/// Rollout model and association blocks over one parameter store.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub rollout: RolloutModel,
    pub assoc: AssocParams,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let rollout = RolloutModel::init(
            &mut store,
            "rollout",
            config.rollout.clone(),
            config.dim,
            config.t_max,
            &mut rng,
        )?;
        let assoc = AssocParams::init(&mut store, config.index_kind, config.dim, config.heads, &mut rng)?;
        Ok(Self {
            config,
            store,
            rollout,
            assoc,
        })
    }

    /// Memory-side rows for the index: one per sequence.
    pub fn memory_rows(&self, g: &mut Graph, seqs: &[Vec<Var>]) -> Result<Var> {
        match self.config.query {
            QueryKind::Rollout => self.rollout.rollout(g, &self.store, seqs),
            QueryKind::LastTracks => {
                let last: Vec<Var> = seqs
                    .iter()
                    .map(|s| {
                        s.last()
                            .copied()
                            .ok_or_else(|| Error::InvalidState("empty buffer".into()))
                    })
                    .collect::<Result<_>>()?;
                g.concat_rows(&last)
            }
        }
    }

    /// Parameters that the configured variant actually uses.
    pub fn used_params(&self) -> Vec<crate::diffcore::ParamId> {
        let mut v = self.assoc.param_ids();
        if self.config.query == QueryKind::Rollout {
            v.extend(self.rollout.param_ids());
        }
        v.sort();
        v
    }
}

/// Model, optimizer state and the training step reached.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub optimizer: Adam,
    pub step: usize,
    pub train: TrainConfig,
}

pub const CHECKPOINT_FORMAT: &str = "ocmot-checkpoint";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    step: usize,
    model: ModelConfig,
    train: TrainConfig,
    adam: AdamConfig,
    adam_step: u64,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    pub fn new(model: Model, train: TrainConfig) -> Self {
        let optimizer = Adam::new(train.adam.clone(), &model.store);
        Self {
            model,
            optimizer,
            step: 0,
            train,
        }
    }

    /// Layout: u64 LE header length, JSON header, raw LE f64 payload.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload: Vec<u8> = Vec::new();
        let mut tensors = Vec::new();
        let groups: [(&str, &[Tensor]); 3] = [
            ("param", self.model.store.tensors()),
            ("adam_m", &self.optimizer.m),
            ("adam_v", &self.optimizer.v),
        ];
        for (group, ts) in groups {
            for (i, t) in ts.iter().enumerate() {
                tensors.push(TensorEntry {
                    name: format!("{group}/{}", self.model.store.name(crate::diffcore::ParamId(i))),
                    shape: t.shape().to_vec(),
                    dtype: "f64".into(),
                    offset: payload.len() as u64,
                });
                for v in t.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            version: 1,
            step: self.step,
            model: self.model.config.clone(),
            train: self.train.clone(),
            adam: self.optimizer.config.clone(),
            adam_step: self.optimizer.step,
            tensors,
        };
        let h = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + h.len() + payload.len());
        out.extend_from_slice(&(h.len() as u64).to_le_bytes());
        out.extend_from_slice(&h);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let len_bytes: [u8; 8] = bytes
            .get(..8)
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| Error::Format("checkpoint too short".into()))?;
        let hlen = u64::from_le_bytes(len_bytes) as usize;
        let hbytes = bytes
            .get(8..8 + hlen)
            .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
        let header: Header = serde_json::from_slice(hbytes)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unknown format {:?}", header.format)));
        }
        let payload = &bytes[8 + hlen..];
        let mut model = Model::init(header.model.clone(), 0)?;
        let n = model.store.len();
        if header.tensors.len() != 3 * n {
            return Err(Error::Format(format!(
                "checkpoint has {} tensors, model expects {}",
                header.tensors.len(),
                3 * n
            )));
        }
        let read = |e: &TensorEntry, expect_name: &str, shape: &[usize]| -> Result<Tensor> {
            if e.name != expect_name || e.shape != shape || e.dtype != "f64" {
                return Err(Error::Format(format!(
                    "tensor {} {:?} {} does not match {expect_name} {shape:?}",
                    e.name, e.shape, e.dtype
                )));
            }
            let count: usize = shape.iter().product();
            let start = e.offset as usize;
            let raw = payload
                .get(start..start + 8 * count)
                .ok_or_else(|| Error::Format(format!("tensor {} out of range", e.name)))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            Tensor::new(shape, data)
        };
        let mut m = Vec::with_capacity(n);
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let id = crate::diffcore::ParamId(i);
            let name = model.store.name(id).to_string();
            let shape = model.store.get(id).shape().to_vec();
            *model.store.get_mut(id) = read(&header.tensors[i], &format!("param/{name}"), &shape)?;
            m.push(read(&header.tensors[n + i], &format!("adam_m/{name}"), &shape)?);
            v.push(read(&header.tensors[2 * n + i], &format!("adam_v/{name}"), &shape)?);
        }
        Ok(Self {
            model,
            optimizer: Adam {
                config: header.adam,
                step: header.adam_step,
                m,
                v,
            },
            step: header.step,
            train: header.train,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)?.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

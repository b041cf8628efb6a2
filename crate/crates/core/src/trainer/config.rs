use serde::{Deserialize, Serialize};

use crate::diffcore::AdamConfig;
use crate::emloss::LossWeights;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Consecutive,
    SlowFast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub sampling: Sampling,
    pub strides: Vec<usize>,
    /// Frames per training clip.
    pub clip_len: usize,
    pub adam: AdamConfig,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub weights: LossWeights,
    /// Memory buffers per clip.
    pub capacity: usize,
    pub tau_iou: f64,
    pub tau_new: f64,
    pub mask_threshold: f64,
    /// Slots whose mean decoded mask value is below this are background.
    pub mass_floor: f64,
    /// Let the loss weighting back-propagate into the index.
    pub index_grad: bool,
    /// Forward the hard index in the loss weighting (diagnostic only).
    pub straight_through: bool,
    pub log_every: usize,
    /// Write a checkpoint every this many steps (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sampling: Sampling::SlowFast,
            strides: vec![1, 2, 4],
            clip_len: 7,
            adam: AdamConfig::default(),
            steps: 2000,
            batch: 8,
            seed: 0,
            weights: LossWeights::default(),
            capacity: 15,
            tau_iou: 0.9,
            tau_new: 0.2,
            mask_threshold: 0.5,
            mass_floor: 0.004,
            index_grad: true,
            straight_through: false,
            log_every: 10,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.strides.is_empty() || self.strides.contains(&0) {
            return Err(Error::Config(format!("strides {:?} must be nonempty and positive", self.strides)));
        }
        if self.clip_len < 2 {
            return Err(Error::Config(format!("clip_len {} < 2", self.clip_len)));
        }
        if self.batch == 0 || self.capacity == 0 || self.log_every == 0 {
            return Err(Error::Config("batch, capacity and log_every must be positive".into()));
        }
        for (name, v) in [
            ("tau_iou", self.tau_iou),
            ("tau_new", self.tau_new),
            ("mask_threshold", self.mask_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} = {v} is not in (0, 1)")));
            }
        }
        if !(self.adam.lr > 0.0) || !(self.adam.lr_decay > 0.0 && self.adam.lr_decay <= 1.0) {
            return Err(Error::Config("invalid learning rate schedule".into()));
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::decoder::DecoderSpec;
use crate::error::{Error, Result};

/// Synthetic benchmark parameters. Corruption rates are calibration knobs
/// that emulate grouping-model failure modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub decoder: DecoderSpec,
    pub videos: usize,
    pub frames: usize,
    pub objects: usize,
    /// Slots per frame (N).
    pub slots: usize,
    /// Probability a visible object is split into two part slots.
    pub p_split: f64,
    /// Probability a visible object gets an extra duplicate slot.
    pub p_dup: f64,
    /// Probability an object below `v_min` visibility emits no slot.
    pub p_miss: f64,
    pub v_min: f64,
    /// Std of Gaussian noise added to every slot dimension.
    pub noise_scale: f64,
    /// Std of the per-object appearance code.
    pub appearance_std: f64,
    /// Speed range, scene units per frame.
    pub speed: [f64; 2],
    /// Object scale (sx) range, scene units.
    pub scale: [f64; 2],
    /// Background blob scale range, scene units.
    pub bg_scale: [f64; 2],
    pub mask_threshold: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            decoder: DecoderSpec::default(),
            videos: 64,
            frames: 64,
            objects: 8,
            slots: 12,
            p_split: 0.15,
            p_dup: 0.1,
            p_miss: 0.8,
            v_min: 0.3,
            noise_scale: 0.05,
            appearance_std: 1.0,
            speed: [0.006, 0.02],
            scale: [0.06, 0.1],
            bg_scale: [0.01, 0.018],
            mask_threshold: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.decoder.validate()?;
        let probs = [
            ("p_split", self.p_split),
            ("p_dup", self.p_dup),
            ("p_miss", self.p_miss),
            ("v_min", self.v_min),
            ("mask_threshold", self.mask_threshold),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not in [0, 1]")));
            }
        }
        if self.videos == 0 || self.frames == 0 {
            return Err(Error::Config("need at least one video and one frame".into()));
        }
        if self.slots < self.objects.max(1) {
            return Err(Error::Config(format!(
                "{} slots cannot hold {} objects",
                self.slots, self.objects
            )));
        }
        for (name, r) in [("speed", self.speed), ("scale", self.scale), ("bg_scale", self.bg_scale)] {
            if !(r[0] >= 0.0 && r[0] <= r[1]) {
                return Err(Error::Config(format!("{name} range {r:?} is invalid")));
            }
        }
        if self.scale[0] <= 0.0 || self.bg_scale[0] <= 0.0 {
            return Err(Error::Config("scales must be positive".into()));
        }
        if self.noise_scale < 0.0 || self.appearance_std < 0.0 {
            return Err(Error::Config("noise levels must be nonnegative".into()));
        }
        Ok(())
    }
}

//! Training: clip sampling, the per-step loss over a batch of clips with
//! independent memory banks, Adam updates, checkpoints and the loss curve.

mod clip;
mod config;
mod model;

use std::io::Write;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use clip::{clip_loss, ClipStats};
pub use config::{Sampling, TrainConfig};
pub use model::{Checkpoint, Model, ModelConfig, QueryKind, CHECKPOINT_FORMAT};

use crate::diffcore::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::slotworld::Dataset;

/// Frame indices of one clip of `length` frames.
pub fn sample_sequence<R: Rng + ?Sized>(
    video_len: usize,
    length: usize,
    mode: Sampling,
    strides: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if length == 0 || video_len < length {
        return Err(Error::Config(format!("video of {video_len} frames is too short for clips of {length}")));
    }
    let stride = match mode {
        Sampling::Consecutive => 1,
        Sampling::SlowFast => {
            let fits: Vec<usize> = strides
                .iter()
                .copied()
                .filter(|&r| r >= 1 && r * (length - 1) < video_len)
                .collect();
            *fits
                .choose(rng)
                .ok_or_else(|| Error::Config(format!("no stride in {strides:?} fits {video_len} frames")))?
        }
    };
    let span = stride * (length - 1);
    let start = rng.gen_range(0..video_len - span);
    Ok((0..length).map(|k| start + k * stride).collect())
}

/// RNG of training step `step`; independent of earlier steps so a resumed
/// run draws the same clips.
pub fn step_rng(seed: u64, step: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step as u64);
    rng
}

/// `(video, frame indices)` per clip.
pub type ClipRef = (usize, Vec<usize>);

pub fn sample_batch<R: Rng + ?Sized>(data: &Dataset, cfg: &TrainConfig, rng: &mut R) -> Result<Vec<ClipRef>> {
    (0..cfg.batch)
        .map(|_| {
            let v = rng.gen_range(0..data.videos.len());
            let idx = sample_sequence(data.videos[v].len(), cfg.clip_len, cfg.sampling, &cfg.strides, rng)?;
            Ok((v, idx))
        })
        .collect()
}

/// Mean clip loss of a batch on `g`, or `None` if no clip contributes.
pub fn batch_loss(
    g: &mut Graph,
    model: &Model,
    data: &Dataset,
    cfg: &TrainConfig,
    clips: &[ClipRef],
) -> Result<Option<crate::diffcore::Var>> {
    let spec = &data.config.decoder;
    let mut losses = Vec::new();
    for (v, idx) in clips {
        let frames: Vec<&Tensor> = idx.iter().map(|&t| &data.videos[*v].frames[t].slots).collect();
        if let (Some(l), _) = clip_loss(g, model, spec, cfg, &frames)? {
            losses.push(l);
        }
    }
    if losses.is_empty() {
        return Ok(None);
    }
    let n = losses.len() as f64;
    let s = g.concat_rows(&losses)?;
    let s = g.sum(s);
    Ok(Some(g.scale(s, 1.0 / n)))
}

/// One optimizer step; returns the batch loss before the update.
pub fn train_step(ck: &mut Checkpoint, data: &Dataset) -> Result<Option<f64>> {
    let mut rng = step_rng(ck.train.seed, ck.step);
    let clips = sample_batch(data, &ck.train, &mut rng)?;
    let mut g = Graph::new();
    let loss = batch_loss(&mut g, &ck.model, data, &ck.train, &clips)?;
    let value = match loss {
        Some(l) => {
            let grads = g.backward(l)?.for_params(&ck.model.store);
            ck.optimizer.step(&mut ck.model.store, &grads)?;
            Some(g.value(l).item())
        }
        None => None,
    };
    ck.step += 1;
    Ok(value)
}

/// Mean loss over a fixed set of clips drawn with `seed`, no update.
pub fn evaluate_loss(model: &Model, data: &Dataset, cfg: &TrainConfig, clips: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = TrainConfig {
        batch: clips,
        ..cfg.clone()
    };
    let batch = sample_batch(data, &c, &mut rng)?;
    let mut g = Graph::new();
    batch_loss(&mut g, model, data, &c, &batch)?
        .map(|l| g.value(l).item())
        .ok_or_else(|| Error::InvalidState("no clip produced a loss".into()))
}

/// `(step, loss)` records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub points: Vec<(usize, f64)>,
}

impl LossCurve {
    pub fn to_text(&self) -> String {
        self.points.iter().map(|(s, l)| format!("{s}\t{l:e}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let points = text
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let (s, v) = l
                    .split_once('\t')
                    .ok_or_else(|| Error::Format(format!("bad loss line {l:?}")))?;
                let s = s.parse().map_err(|_| Error::Format(format!("bad step {s:?}")))?;
                let v = v.parse().map_err(|_| Error::Format(format!("bad loss {v:?}")))?;
                Ok((s, v))
            })
            .collect::<Result<_>>()?;
        Ok(Self { points })
    }
}

/// Where [`train`] writes periodic output.
#[derive(Clone, Debug, Default)]
pub struct TrainOutputs<'a> {
    /// Loss curve file, appended to as records are produced.
    pub curve: Option<&'a Path>,
    /// Checkpoint file rewritten every `checkpoint_every` steps.
    pub checkpoint: Option<&'a Path>,
}

/// Runs steps until `ck.step == ck.train.steps`.
pub fn train(ck: &mut Checkpoint, data: &Dataset, out: &TrainOutputs) -> Result<LossCurve> {
    ck.train.validate()?;
    if data.config.decoder.dim != ck.model.config.dim {
        return Err(Error::Shape(format!(
            "dataset latent dim {} vs model dim {}",
            data.config.decoder.dim, ck.model.config.dim
        )));
    }
    let mut curve = LossCurve::default();
    let mut file = match out.curve {
        Some(p) => Some(std::fs::OpenOptions::new().create(true).append(true).open(p)?),
        None => None,
    };
    while ck.step < ck.train.steps {
        let step = ck.step;
        let loss = train_step(ck, data)?;
        debug!("step {step} loss {loss:?}");
        if let Some(l) = loss {
            if step % ck.train.log_every == 0 || ck.step == ck.train.steps {
                curve.points.push((step, l));
                if let Some(f) = file.as_mut() {
                    writeln!(f, "{step}\t{l:e}")?;
                }
                info!("step {step} loss {l:.6} lr {:.3e}", ck.optimizer.current_lr());
            }
        }
        if let Some(p) = out.checkpoint {
            if ck.train.checkpoint_every > 0 && ck.step % ck.train.checkpoint_every == 0 {
                ck.save(p)?;
            }
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consecutive_clip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let idx = sample_sequence(10, 6, Sampling::Consecutive, &[1, 2, 4], &mut rng).unwrap();
        assert_eq!(idx.len(), 6);
        assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
        assert!(idx[5] <= 9);
    }

    #[test]
    fn stride_four_from_zero() {
        // a video of exactly 21 frames admits only start 0 at stride 4
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = sample_sequence(21, 6, Sampling::SlowFast, &[4], &mut rng).unwrap();
        assert_eq!(idx, vec![0, 4, 8, 12, 16, 20]);
    }

    #[test]
    fn unit_stride_set_matches_consecutive() {
        let a = sample_sequence(30, 6, Sampling::SlowFast, &[1], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(a.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn strides_that_do_not_fit_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let idx = sample_sequence(12, 6, Sampling::SlowFast, &[1, 2, 4], &mut rng).unwrap();
            assert!(idx[5] < 12);
        }
        assert!(sample_sequence(12, 6, Sampling::SlowFast, &[4], &mut rng).is_err());
        assert!(sample_sequence(5, 6, Sampling::Consecutive, &[1], &mut rng).is_err());
    }

    #[test]
    fn loss_curve_round_trip() {
        let c = LossCurve {
            points: vec![(0, 1.5), (10, 0.123456789)],
        };
        assert_eq!(LossCurve::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let model = Model::init(ModelConfig::default(), 3).unwrap();
        let ck = Checkpoint::new(model, TrainConfig::default());
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.model.store, ck.model.store);
        assert_eq!(back.optimizer, ck.optimizer);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}

use crate::diffcore::{Graph, Tensor, Var};
use crate::emloss::{em_loss_decoded, Side};
use crate::error::{Error, Result};
use crate::geometry::Mask;
use crate::indexmerge::{argmax_rows, index, merge, straight_through};
use crate::membank::MemoryBank;
use crate::slotworld::DecoderSpec;
use crate::tracker::{dedup_first_frame, foreground_slots, new_object_candidates};

use super::config::TrainConfig;
use super::model::Model;

/// Diagnostics of one clip's forward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClipStats {
    pub timesteps: usize,
    pub activations: usize,
    pub dropped: usize,
}

/// Builds the clip's loss on `g`: mean over timesteps with at least one
/// slot/buffer pair. Returns `None` when no timestep contributes.
pub fn clip_loss(
    g: &mut Graph,
    model: &Model,
    spec: &DecoderSpec,
    cfg: &TrainConfig,
    frames: &[&Tensor],
) -> Result<(Option<Var>, ClipStats)> {
    let t_max = model.config.t_max;
    let tau_out = u32::try_from(frames.len()).unwrap_or(u32::MAX).max(1);
    let mut bank: MemoryBank<Var> = MemoryBank::new(cfg.capacity, t_max, tau_out)?;
    let mut stats = ClipStats::default();
    let views0 = foreground_slots(spec, frames[0], cfg.mask_threshold, cfg.mass_floor);
    let masks0: Vec<&Mask> = views0.iter().map(|v| &v.mask).collect();
    for k in dedup_first_frame(&masks0, cfg.tau_iou) {
        let row = g.input(Tensor::row_vector(frames[0].row(views0[k].row)));
        activate(&mut bank, row, 0, &mut stats);
    }
    let mut prev_masks: Vec<Mask> = views0.into_iter().map(|v| v.mask).collect();
    let mut losses = Vec::new();
    for (t, frame) in frames.iter().enumerate().skip(1) {
        let views = foreground_slots(spec, frame, cfg.mask_threshold, cfg.mass_floor);
        let masks: Vec<&Mask> = views.iter().map(|v| &v.mask).collect();
        let reference: Vec<&Mask> = prev_masks.iter().collect();
        let fresh = new_object_candidates(&masks, &reference, cfg.tau_new, cfg.tau_iou);
        let is_new = |k: usize| fresh.contains(&k);
        let assoc_rows: Vec<usize> = (0..views.len()).filter(|&k| !is_new(k)).map(|k| views[k].row).collect();
        let live = bank.live_ids();
        if !live.is_empty() {
            if assoc_rows.is_empty() {
                for &id in &live {
                    bank.mark_missed(id)?;
                }
            } else {
                let seqs: Vec<Vec<Var>> = live.iter().map(|&id| bank.entries(id)).collect::<Result<_>>()?;
                let mem = model.memory_rows(g, &seqs)?;
                let slots = g.input(frame.select_rows(&assoc_rows));
                let soft = index(g, &model.store, &model.assoc, slots, mem)?;
                let merged = merge(g, &model.store, &model.assoc, slots, mem, soft)?.merged;
                let weight = if cfg.straight_through {
                    straight_through(g, soft)?
                } else if cfg.index_grad {
                    soft
                } else {
                    g.detach(soft)
                };
                let side = Side::new(g, spec, slots)?;
                let loss = em_loss_decoded(g, spec, &side, merged, mem, weight, &cfg.weights)?;
                losses.push(loss);
                stats.timesteps += 1;
                let hard = argmax_rows(g.value(soft));
                for (j, &id) in live.iter().enumerate() {
                    if hard.contains(&j) {
                        let row = g.row(merged, j)?;
                        bank.write(id, row, t)?;
                    } else {
                        bank.mark_missed(id)?;
                    }
                }
            }
        }
        for &k in &fresh {
            let row = g.input(Tensor::row_vector(frame.row(views[k].row)));
            activate(&mut bank, row, t, &mut stats);
        }
        prev_masks = views.into_iter().map(|v| v.mask).collect();
    }
    if losses.is_empty() {
        return Ok((None, stats));
    }
    let n = losses.len() as f64;
    let stacked = g.concat_rows(&losses)?;
    let total = g.sum(stacked);
    let mean = g.scale(total, 1.0 / n);
    if !g.value(mean).item().is_finite() {
        return Err(Error::NonFinite("clip loss".into()));
    }
    Ok((Some(mean), stats))
}

fn activate(bank: &mut MemoryBank<Var>, row: Var, t: usize, stats: &mut ClipStats) {
    match bank.activate(row, t) {
        Ok(_) => stats.activations += 1,
        Err(_) => stats.dropped += 1,
    }
}

//! Assignment cost between slots and memory representations, and the
//! expectation loss that weights every slot/buffer pair by its index mass.
//!
//! `cost(s, m) = λ1·BCE(mask(s) → mask(m)) + λ2·MSE(recon) + λ3·MSE(features)`,
//! where the decoded slot mask is the target and the decoded memory mask,
//! clamped to `[ε, 1-ε]`, is the prediction. All three terms are averaged
//! over pixels or dimensions.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::slotworld::{Decoded, DecoderSpec};

pub const MASK_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub mask: f64,
    pub recon: f64,
    pub feature: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            mask: 1.0,
            recon: 0.1,
            feature: 0.0,
        }
    }
}

impl LossWeights {
    pub fn new(mask: f64, recon: f64, feature: f64) -> Self {
        Self { mask, recon, feature }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.mask, self.recon, self.feature];
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || w.iter().all(|&x| x == 0.0) {
            return Err(Error::Config(format!(
                "loss weights {w:?} must be nonnegative with at least one positive"
            )));
        }
        Ok(())
    }
}

/// Decoded form of a set of representations, reused across cost terms.
pub struct Side {
    pub z: Var,
    pub dec: Decoded,
}

impl Side {
    pub fn new(g: &mut Graph, spec: &DecoderSpec, z: Var) -> Result<Self> {
        let dec = spec.decode(g, z)?;
        Ok(Self { z, dec })
    }
}

/// Pairwise costs `N × M` between slot rows and memory rows.
pub fn cost_matrix(g: &mut Graph, slots: &Side, mem: &Side, w: &LossWeights) -> Result<Var> {
    w.validate()?;
    let mut terms = Vec::with_capacity(3);
    if w.mask > 0.0 {
        let p = g.value(slots.dec.mask).cols() as f64;
        let q = g.clamp(mem.dec.mask, MASK_EPS, 1.0 - MASK_EPS);
        let lq = g.ln(q);
        let one_minus = g.affine(q, -1.0, 1.0);
        let lnq = g.ln(one_minus);
        let t = slots.dec.mask;
        let nt = g.affine(t, -1.0, 1.0);
        let lqt = g.transpose(lq);
        let lnqt = g.transpose(lnq);
        let a = g.matmul(t, lqt)?;
        let b = g.matmul(nt, lnqt)?;
        let ab = g.add(a, b)?;
        terms.push(g.scale(ab, -w.mask / p));
    }
    if w.recon > 0.0 {
        let r = g.pair_mean_sq(slots.dec.recon, mem.dec.recon)?;
        terms.push(g.scale(r, w.recon));
    }
    if w.feature > 0.0 {
        let f = g.pair_mean_sq(slots.z, mem.z)?;
        terms.push(g.scale(f, w.feature));
    }
    let mut c = terms[0];
    for &t in &terms[1..] {
        c = g.add(c, t)?;
    }
    Ok(c)
}

/// Cost of one slot row `s` (`1 × d`) against one memory row `m`, built
/// from elementwise operations only.
pub fn assign_cost(g: &mut Graph, spec: &DecoderSpec, s: Var, m: Var, w: &LossWeights) -> Result<Var> {
    w.validate()?;
    let ds = spec.decode(g, s)?;
    let dm = spec.decode(g, m)?;
    let mut total: Option<Var> = None;
    let mut push = |g: &mut Graph, v: Var| -> Result<()> {
        total = Some(match total {
            Some(t) => g.add(t, v)?,
            None => v,
        });
        Ok(())
    };
    if w.mask > 0.0 {
        let q = g.clamp(dm.mask, MASK_EPS, 1.0 - MASK_EPS);
        let lq = g.ln(q);
        let nq = g.affine(q, -1.0, 1.0);
        let lnq = g.ln(nq);
        let nt = g.affine(ds.mask, -1.0, 1.0);
        let a = g.mul(ds.mask, lq)?;
        let b = g.mul(nt, lnq)?;
        let ab = g.add(a, b)?;
        let bce = g.mean(ab);
        let v = g.scale(bce, -w.mask);
        push(g, v)?;
    }
    if w.recon > 0.0 {
        let diff = g.sub(ds.recon, dm.recon)?;
        let sq = g.mul(diff, diff)?;
        let mse = g.mean(sq);
        let v = g.scale(mse, w.recon);
        push(g, v)?;
    }
    if w.feature > 0.0 {
        let diff = g.sub(s, m)?;
        let sq = g.mul(diff, diff)?;
        let mse = g.mean(sq);
        let v = g.scale(mse, w.feature);
        push(g, v)?;
    }
    Ok(total.expect("at least one positive weight"))
}

fn check_shapes(g: &Graph, slots: Var, merged: Var, rollout: Var, index: Var) -> Result<()> {
    let (n, m) = (g.value(slots).rows(), g.value(merged).rows());
    if g.shape(rollout) != g.shape(merged) || g.shape(index) != [n, m] {
        return Err(Error::Shape(format!(
            "em_loss slots {:?} merged {:?} rollout {:?} index {:?}",
            g.shape(slots),
            g.shape(merged),
            g.shape(rollout),
            g.shape(index)
        )));
    }
    Ok(())
}

fn finite(g: &Graph, v: Var) -> Result<Var> {
    if g.value(v).item().is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("em_loss".into()))
    }
}

/// `Σ_i Σ_j index[i,j] · (cost(s_i, merged_j) + cost(s_i, rollout_j))`.
pub fn em_loss(
    g: &mut Graph,
    spec: &DecoderSpec,
    slots: Var,
    merged: Var,
    rollout: Var,
    index: Var,
    w: &LossWeights,
) -> Result<Var> {
    check_shapes(g, slots, merged, rollout, index)?;
    let s = Side::new(g, spec, slots)?;
    em_loss_decoded(g, spec, &s, merged, rollout, index, w)
}

/// [`em_loss`] with the slot side already decoded.
pub fn em_loss_decoded(
    g: &mut Graph,
    spec: &DecoderSpec,
    slots: &Side,
    merged: Var,
    rollout: Var,
    index: Var,
    w: &LossWeights,
) -> Result<Var> {
    check_shapes(g, slots.z, merged, rollout, index)?;
    let m = Side::new(g, spec, merged)?;
    let r = Side::new(g, spec, rollout)?;
    let cm = cost_matrix(g, slots, &m, w)?;
    let cr = cost_matrix(g, slots, &r, w)?;
    let c = g.add(cm, cr)?;
    let weighted = g.mul(index, c)?;
    let total = g.sum(weighted);
    finite(g, total)
}

/// Explicit double sum over pairs using [`assign_cost`].
pub fn em_loss_brute(
    g: &mut Graph,
    spec: &DecoderSpec,
    slots: Var,
    merged: Var,
    rollout: Var,
    index: Var,
    w: &LossWeights,
) -> Result<Var> {
    check_shapes(g, slots, merged, rollout, index)?;
    let (n, m) = (g.value(slots).rows(), g.value(merged).rows());
    let mut total = g.input(Tensor::scalar(0.0));
    for i in 0..n {
        let s = g.row(slots, i)?;
        let ii = g.row(index, i)?;
        for j in 0..m {
            let mj = g.row(merged, j)?;
            let rj = g.row(rollout, j)?;
            let a = assign_cost(g, spec, s, mj, w)?;
            let b = assign_cost(g, spec, s, rj, w)?;
            let c = g.add(a, b)?;
            let iij = g.slice_cols(ii, j, 1)?;
            // 1 × 1 to a scalar
            let iij = g.sum(iij);
            let term = g.mul(iij, c)?;
            total = g.add(total, term)?;
        }
    }
    finite(g, total)
}

/// Log-likelihood view of the cost for one slot/memory pair.
///
/// * `p1`: per-pixel Bernoulli `q^t (1-q)^(1-t)` with `t = mask(s)` and
///   `q = mask(m)`, each factor raised to `λ1 / P`;
/// * `p2`: isotropic Gaussian on `recon(m)` centred at `recon(s)` with
///   variance `D / (2 λ2)`;
/// * `p3`: isotropic Gaussian on `m` centred at `s` with variance `d / (2 λ3)`.
///
/// Factors whose weight is zero are dropped. The negative log of the
/// product equals the assignment cost plus a term independent of `s`, `m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogLikelihood {
    pub log_p1: f64,
    pub log_p2: f64,
    pub log_p3: f64,
}

impl LogLikelihood {
    pub fn evaluate(spec: &DecoderSpec, s: &[f64], m: &[f64], w: &LossWeights) -> Self {
        let (ts, qm) = (spec.mask(s), spec.mask(m));
        let p = ts.len() as f64;
        let log_p1 = if w.mask > 0.0 {
            ts.iter()
                .zip(&qm)
                .map(|(&t, &q)| {
                    let q = q.clamp(MASK_EPS, 1.0 - MASK_EPS);
                    (w.mask / p) * (t * q.ln() + (1.0 - t) * (1.0 - q).ln())
                })
                .sum()
        } else {
            0.0
        };
        let log_p2 = if w.recon > 0.0 {
            gaussian_log_density(&spec.recon(m), &spec.recon(s), w.recon)
        } else {
            0.0
        };
        let log_p3 = if w.feature > 0.0 {
            gaussian_log_density(m, s, w.feature)
        } else {
            0.0
        };
        Self { log_p1, log_p2, log_p3 }
    }

    pub fn neg_log_joint(&self) -> f64 {
        -(self.log_p1 + self.log_p2 + self.log_p3)
    }
}

/// `log N(x; mu, σ² I)` with `σ² = D / (2 λ)`.
fn gaussian_log_density(x: &[f64], mu: &[f64], lambda: f64) -> f64 {
    let dim = x.len() as f64;
    let var = dim / (2.0 * lambda);
    let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
    -sq / (2.0 * var) - 0.5 * dim * (2.0 * std::f64::consts::PI * var).ln()
}

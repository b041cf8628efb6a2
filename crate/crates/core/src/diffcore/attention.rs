use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Value and output projections; absent for blocks whose only product is
/// the attention-weight matrix.
#[derive(Clone, Copy, Debug)]
pub struct ValueOut<T> {
    pub wv: T,
    pub bv: T,
    pub wo: T,
    pub bo: T,
}

/// Projection weights of one attention block, generic over storage
/// (`ParamId` in a store, `Var` once bound to a graph).
#[derive(Clone, Copy, Debug)]
pub struct MhaWeights<T> {
    pub wq: T,
    pub bq: T,
    pub wk: T,
    pub bk: T,
    pub value_out: Option<ValueOut<T>>,
}

pub type MhaParams = MhaWeights<ParamId>;
pub type MhaVars = MhaWeights<Var>;

impl MhaParams {
    /// Registers a block of width `d`; projections are drawn from
    /// `U(-1/sqrt(d), 1/sqrt(d))` and biases start at zero.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        with_value: bool,
        rng: &mut R,
    ) -> Self {
        let s = 1.0 / (d as f64).sqrt();
        let mat = |store: &mut ParamStore, name: &str, rng: &mut R| {
            store.add(format!("{prefix}.{name}"), Tensor::uniform(&[d, d], s, rng))
        };
        let wq = mat(store, "wq", rng);
        let wk = mat(store, "wk", rng);
        let value = with_value.then(|| {
            let wv = mat(store, "wv", rng);
            let wo = mat(store, "wo", rng);
            (wv, wo)
        });
        let bq = store.add(format!("{prefix}.bq"), Tensor::zeros(&[1, d]));
        let bk = store.add(format!("{prefix}.bk"), Tensor::zeros(&[1, d]));
        let value_out = value.map(|(wv, wo)| ValueOut {
            wv,
            bv: store.add(format!("{prefix}.bv"), Tensor::zeros(&[1, d])),
            wo,
            bo: store.add(format!("{prefix}.bo"), Tensor::zeros(&[1, d])),
        });
        Self {
            wq,
            bq,
            wk,
            bk,
            value_out,
        }
    }

    /// Like [`MhaParams::init`] but every projection starts at the identity
    /// plus `U(-noise, noise)`, so the block initially attends by raw
    /// latent similarity and returns convex combinations of its values.
    pub fn init_identity<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        with_value: bool,
        noise: f64,
        rng: &mut R,
    ) -> Self {
        let p = Self::init(store, prefix, d, with_value, rng);
        let mut ids = vec![p.wq, p.wk];
        if let Some(vo) = p.value_out {
            ids.extend([vo.wv, vo.wo]);
        }
        for id in ids {
            let mut t = Tensor::uniform(&[d, d], noise, rng);
            for i in 0..d {
                t.set(i, i, t.get(i, i) + 1.0);
            }
            *store.get_mut(id) = t;
        }
        p
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> MhaVars {
        MhaWeights {
            wq: g.param(store, self.wq),
            bq: g.param(store, self.bq),
            wk: g.param(store, self.wk),
            bk: g.param(store, self.bk),
            value_out: self.value_out.map(|vo| ValueOut {
                wv: g.param(store, vo.wv),
                bv: g.param(store, vo.bv),
                wo: g.param(store, vo.wo),
                bo: g.param(store, vo.bo),
            }),
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.wq, self.bq, self.wk, self.bk];
        if let Some(vo) = self.value_out {
            v.extend([vo.wv, vo.bv, vo.wo, vo.bo]);
        }
        v
    }
}

impl MhaVars {
    /// Identity projections with zero biases, as constants.
    pub fn identity(g: &mut Graph, d: usize, with_value: bool) -> Self {
        let eye = |g: &mut Graph| g.input(Tensor::eye(d));
        let wq = eye(g);
        let wk = eye(g);
        let value = with_value.then(|| (eye(g), eye(g)));
        let zero = |g: &mut Graph| g.input(Tensor::zeros(&[1, d]));
        let bq = zero(g);
        let bk = zero(g);
        Self {
            wq,
            bq,
            wk,
            bk,
            value_out: value.map(|(wv, wo)| ValueOut {
                wv,
                bv: zero(g),
                wo,
                bo: zero(g),
            }),
        }
    }
}

pub struct AttnOutput {
    /// `queries × d`; `None` when the block has no value/output projection.
    pub output: Option<Var>,
    /// Head-averaged `queries × keys` weights.
    pub weights: Var,
}

fn project(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.matmul(x, w)?;
    g.add_row(y, b)
}

/// Scaled dot-product attention over `heads` heads with learned projections.
///
/// A mask multiplies each head's softmax weights before renormalization;
/// keys whose mask entry is zero receive weight exactly 0. A mask row with
/// no positive entry yields [`Error::DegenerateMask`].
pub fn multi_head_attention(
    g: &mut Graph,
    w: &MhaVars,
    heads: usize,
    query: Var,
    key: Var,
    value: Var,
    mask: Option<Var>,
) -> Result<AttnOutput> {
    let d = g.value(query).cols();
    let (nq, nk) = (g.value(query).rows(), g.value(key).rows());
    if g.value(key).cols() != d || g.value(value).cols() != d || g.value(value).rows() != nk {
        return Err(Error::Shape(format!(
            "attention q {:?} k {:?} v {:?}",
            g.shape(query),
            g.shape(key),
            g.shape(value)
        )));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::Shape(format!("{heads} heads do not divide width {d}")));
    }
    if let Some(m) = mask {
        if g.shape(m) != [nq, nk] {
            return Err(Error::Shape(format!(
                "mask {:?} for {nq}x{nk} attention",
                g.shape(m)
            )));
        }
    }
    let dh = d / heads;
    let q = project(g, query, w.wq, w.bq)?;
    let k = project(g, key, w.wk, w.bk)?;
    let v = match w.value_out {
        Some(vo) => Some(project(g, value, vo.wv, vo.bv)?),
        None => None,
    };
    let scale = 1.0 / (dh as f64).sqrt();
    let mut weight_sum: Option<Var> = None;
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh) = if heads == 1 {
            (q, k)
        } else {
            (g.slice_cols(q, h * dh, dh)?, g.slice_cols(k, h * dh, dh)?)
        };
        let kt = g.transpose(kh);
        let logits = g.matmul(qh, kt)?;
        let logits = g.scale(logits, scale);
        let wh = g.masked_softmax(logits, mask)?;
        weight_sum = Some(match weight_sum {
            None => wh,
            Some(s) => g.add(s, wh)?,
        });
        if let Some(v) = v {
            let vh = if heads == 1 { v } else { g.slice_cols(v, h * dh, dh)? };
            head_outs.push(g.matmul(wh, vh)?);
        }
    }
    let weights = match weight_sum {
        Some(s) if heads > 1 => g.scale(s, 1.0 / heads as f64),
        Some(s) => s,
        None => unreachable!("heads > 0"),
    };
    let output = match w.value_out {
        Some(vo) => {
            let cat = if heads == 1 {
                head_outs[0]
            } else {
                g.concat_cols(&head_outs)?
            };
            Some(project(g, cat, vo.wo, vo.bo)?)
        }
        None => None,
    };
    Ok(AttnOutput { output, weights })
}

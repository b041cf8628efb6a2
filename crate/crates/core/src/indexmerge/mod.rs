//! Slot-to-buffer indexing, buffer-side merging and binarization.
//!
//! `index` attends from slots (queries) to rollout rows (keys) and keeps
//! only the head-averaged weights, an `N × M'` row-stochastic matrix.
//! `merge` attends the other way, from rollout rows to slots, masked by the
//! transposed index, and yields one consolidated representation per buffer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{multi_head_attention, Graph, MhaParams, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Half-width of the uniform noise added to the identity projections of
/// the index and merge blocks at initialization.
pub const IDENTITY_NOISE: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    /// Separate index and merge attention blocks.
    TwoMha,
    /// One parameter set used for both calls.
    OneMhaShared,
    /// Parameter-free scaled dot product for indexing.
    DotProduct,
}

impl std::str::FromStr for IndexKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_mha" => Ok(Self::TwoMha),
            "one_mha_shared" => Ok(Self::OneMhaShared),
            "dot_product" => Ok(Self::DotProduct),
            _ => Err(Error::Config(format!("unknown index kind {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AssocParams {
    pub kind: IndexKind,
    pub heads: usize,
    /// Query/key projections of the index block (`TwoMha` only).
    pub index: Option<MhaParams>,
    pub merge: MhaParams,
}

impl AssocParams {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        kind: IndexKind,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("{heads} heads do not divide width {dim}")));
        }
        let index = (kind == IndexKind::TwoMha)
            .then(|| MhaParams::init_identity(store, "index", dim, false, IDENTITY_NOISE, rng));
        let merge = MhaParams::init_identity(store, "merge", dim, true, IDENTITY_NOISE, rng);
        Ok(Self {
            kind,
            heads,
            index,
            merge,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = self.index.map(|p| p.ids()).unwrap_or_default();
        v.extend(self.merge.ids());
        v
    }
}

/// Soft index `N × M'`; each row is a distribution over the rollout rows.
pub fn index(g: &mut Graph, store: &ParamStore, p: &AssocParams, slots: Var, rollout: Var) -> Result<Var> {
    if g.value(rollout).rows() == 0 {
        return Err(Error::InvalidState("index over no active buffers".into()));
    }
    match p.kind {
        IndexKind::DotProduct => dot_product_index(g, slots, rollout),
        IndexKind::TwoMha | IndexKind::OneMhaShared => {
            let block = match p.kind {
                IndexKind::TwoMha => p.index.expect("two-block params carry an index block"),
                _ => p.merge,
            };
            let w = block.bind(g, store);
            let w = crate::diffcore::MhaWeights { value_out: None, ..w };
            Ok(multi_head_attention(g, &w, p.heads, slots, rollout, rollout, None)?.weights)
        }
    }
}

/// `softmax(S Rᵀ / sqrt(d))` on the raw representations.
pub fn dot_product_index(g: &mut Graph, slots: Var, rollout: Var) -> Result<Var> {
    let d = g.value(slots).cols();
    if g.value(rollout).cols() != d {
        return Err(Error::Shape(format!(
            "index slots {:?} vs rollout {:?}",
            g.shape(slots),
            g.shape(rollout)
        )));
    }
    let rt = g.transpose(rollout);
    let logits = g.matmul(slots, rt)?;
    let logits = g.scale(logits, 1.0 / (d as f64).sqrt());
    g.masked_softmax(logits, None)
}

pub struct Merged {
    /// `M' × d`.
    pub merged: Var,
    /// Whether buffer `j` had positive index mass from some slot. Rows
    /// without support are copies of the rollout.
    pub supported: Vec<bool>,
}

/// Merges slots into buffers with `index` (`N × M'`) as the attention mask.
pub fn merge(
    g: &mut Graph,
    store: &ParamStore,
    p: &AssocParams,
    slots: Var,
    rollout: Var,
    index: Var,
) -> Result<Merged> {
    let (n, m) = (g.value(slots).rows(), g.value(rollout).rows());
    if g.shape(index) != [n, m] {
        return Err(Error::Shape(format!(
            "index {:?} for {n} slots and {m} buffers",
            g.shape(index)
        )));
    }
    let mask = g.transpose(index);
    let supported: Vec<bool> = (0..m)
        .map(|j| g.value(mask).row(j).iter().any(|&v| v > 0.0))
        .collect();
    let live: Vec<usize> = (0..m).filter(|&j| supported[j]).collect();
    let w = p.merge.bind(g, store);
    if live.len() == m {
        let out = multi_head_attention(g, &w, p.heads, rollout, slots, slots, Some(mask))?;
        return Ok(Merged {
            merged: out.output.expect("merge block has values"),
            supported,
        });
    }
    if live.is_empty() {
        return Ok(Merged {
            merged: rollout,
            supported,
        });
    }
    let q = g.gather_rows(rollout, &live)?;
    let mk = g.gather_rows(mask, &live)?;
    let out = multi_head_attention(g, &w, p.heads, q, slots, slots, Some(mk))?;
    let stacked = g.concat_rows(&[out.output.expect("merge block has values"), rollout])?;
    let mut k = 0;
    let order: Vec<usize> = (0..m)
        .map(|j| {
            if supported[j] {
                k += 1;
                k - 1
            } else {
                live.len() + j
            }
        })
        .collect();
    Ok(Merged {
        merged: g.gather_rows(stacked, &order)?,
        supported,
    })
}

/// Row-wise argmax; ties go to the lowest column.
pub fn argmax_rows(index: &Tensor) -> Vec<usize> {
    (0..index.rows())
        .map(|i| {
            let row = index.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// One-hot rows at the argmax.
pub fn binarize(index: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(index.shape());
    for (i, j) in argmax_rows(index).into_iter().enumerate() {
        out.set(i, j, 1.0);
    }
    out
}

/// Forward value of the hard index with the soft index's gradient.
pub fn straight_through(g: &mut Graph, soft: Var) -> Result<Var> {
    let s = g.value(soft);
    let hard = binarize(s);
    let mut delta = hard;
    for (h, v) in delta.data_mut().iter_mut().zip(s.data()) {
        *h -= v;
    }
    let delta = g.input(delta);
    g.add(soft, delta)
}

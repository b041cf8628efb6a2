//! Causal transformer that predicts each buffer's next representation from
//! its stored history.
//!
//! Sequences of all buffers are stacked into one token matrix and attend
//! under a block-diagonal causal mask, so buffers never see each other.
//! The prediction at the last position is `last_entry + W_out LN(h_last)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{multi_head_attention, Graph, MhaParams, MhaVars, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            width: 64,
            heads: 4,
            layers: 2,
            ff_hidden: 128,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "rollout width {} must be a positive multiple of heads {}",
                self.width, self.heads
            )));
        }
        if self.ff_hidden == 0 {
            return Err(Error::Config("rollout ff_hidden must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Block {
    ln1: (ParamId, ParamId),
    attn: MhaParams,
    ln2: (ParamId, ParamId),
    ff1: (ParamId, ParamId),
    ff2: (ParamId, ParamId),
}

#[derive(Clone, Debug)]
pub struct RolloutModel {
    config: RolloutConfig,
    dim: usize,
    t_max: usize,
    embed: (ParamId, ParamId),
    pos: ParamId,
    blocks: Vec<Block>,
    ln_f: (ParamId, ParamId),
    out: (ParamId, ParamId),
}

fn linear<R: Rng + ?Sized>(
    store: &mut ParamStore,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> (ParamId, ParamId) {
    let s = 1.0 / (fan_in as f64).sqrt();
    let w = store.add(format!("{name}.w"), Tensor::uniform(&[fan_in, fan_out], s, rng));
    let b = store.add(format!("{name}.b"), Tensor::zeros(&[1, fan_out]));
    (w, b)
}

fn norm(store: &mut ParamStore, name: &str, n: usize) -> (ParamId, ParamId) {
    let g = store.add(format!("{name}.gain"), Tensor::filled(&[1, n], 1.0));
    let b = store.add(format!("{name}.bias"), Tensor::zeros(&[1, n]));
    (g, b)
}

struct Bound {
    w: Var,
    b: Var,
}

fn bind(g: &mut Graph, store: &ParamStore, p: (ParamId, ParamId)) -> Bound {
    Bound {
        w: g.param(store, p.0),
        b: g.param(store, p.1),
    }
}

fn apply_linear(g: &mut Graph, x: Var, l: &Bound) -> Result<Var> {
    let y = g.matmul(x, l.w)?;
    g.add_row(y, l.b)
}

fn apply_norm(g: &mut Graph, x: Var, l: &Bound) -> Result<Var> {
    g.layer_norm(x, l.w, l.b, LN_EPS)
}

/// Block-diagonal causal mask over stacked sequences of the given lengths.
pub fn causal_block_mask(lengths: &[usize]) -> Tensor {
    let s: usize = lengths.iter().sum();
    let mut m = Tensor::zeros(&[s, s]);
    let mut start = 0;
    for &len in lengths {
        for i in 0..len {
            for j in 0..=i {
                m.set(start + i, start + j, 1.0);
            }
        }
        start += len;
    }
    m
}

impl RolloutModel {
    /// Registers all parameters under `prefix` in `store`.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        config: RolloutConfig,
        dim: usize,
        t_max: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let embed = linear(store, &format!("{prefix}.embed"), dim, w, rng);
        let pos = store.add(
            format!("{prefix}.pos"),
            Tensor::uniform(&[t_max, w], 1.0 / (w as f64).sqrt(), rng),
        );
        let blocks = (0..config.layers)
            .map(|l| {
                let p = format!("{prefix}.block{l}");
                Block {
                    ln1: norm(store, &format!("{p}.ln1"), w),
                    attn: MhaParams::init(store, &format!("{p}.attn"), w, true, rng),
                    ln2: norm(store, &format!("{p}.ln2"), w),
                    ff1: linear(store, &format!("{p}.ff1"), w, config.ff_hidden, rng),
                    ff2: linear(store, &format!("{p}.ff2"), config.ff_hidden, w, rng),
                }
            })
            .collect();
        let ln_f = norm(store, &format!("{prefix}.ln_f"), w);
        let out = linear(store, &format!("{prefix}.out"), w, dim, rng);
        Ok(Self {
            config,
            dim,
            t_max,
            embed,
            pos,
            blocks,
            ln_f,
            out,
        })
    }

    pub fn config(&self) -> &RolloutConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.embed.0, self.embed.1, self.pos];
        for b in &self.blocks {
            v.extend([b.ln1.0, b.ln1.1]);
            v.extend(b.attn.ids());
            v.extend([b.ln2.0, b.ln2.1, b.ff1.0, b.ff1.1, b.ff2.0, b.ff2.1]);
        }
        v.extend([self.ln_f.0, self.ln_f.1, self.out.0, self.out.1]);
        v
    }

    /// Predictions at every position of every sequence, stacked in order
    /// (`Σ len × d`). Each sequence entry is a `1 × d` row.
    pub fn forward_all(&self, g: &mut Graph, store: &ParamStore, seqs: &[Vec<Var>]) -> Result<Var> {
        if seqs.is_empty() {
            return Err(Error::InvalidState("rollout over no buffers".into()));
        }
        let lengths: Vec<usize> = seqs.iter().map(Vec::len).collect();
        if let Some(i) = lengths.iter().position(|&l| l == 0 || l > self.t_max) {
            return Err(Error::InvalidState(format!(
                "buffer sequence {i} has length {} (t_max {})",
                lengths[i], self.t_max
            )));
        }
        let tokens: Vec<Var> = seqs.iter().flatten().copied().collect();
        let x = g.concat_rows(&tokens)?;
        if g.value(x).cols() != self.dim {
            return Err(Error::Shape(format!(
                "rollout expects width {}, got {:?}",
                self.dim,
                g.shape(x)
            )));
        }
        let positions: Vec<usize> = lengths.iter().flat_map(|&l| 0..l).collect();
        let embed = bind(g, store, self.embed);
        let pos_table = g.param(store, self.pos);
        let pos = g.gather_rows(pos_table, &positions)?;
        let h = apply_linear(g, x, &embed)?;
        let mut h = g.add(h, pos)?;
        let mask = g.input(causal_block_mask(&lengths));
        for b in &self.blocks {
            let ln1 = bind(g, store, b.ln1);
            let a = apply_norm(g, h, &ln1)?;
            let attn: MhaVars = b.attn.bind(g, store);
            let o = multi_head_attention(g, &attn, self.config.heads, a, a, a, Some(mask))?;
            h = g.add(h, o.output.expect("rollout attention has values"))?;
            let ln2 = bind(g, store, b.ln2);
            let f = apply_norm(g, h, &ln2)?;
            let ff1 = bind(g, store, b.ff1);
            let f = apply_linear(g, f, &ff1)?;
            let f = g.gelu(f);
            let ff2 = bind(g, store, b.ff2);
            let f = apply_linear(g, f, &ff2)?;
            h = g.add(h, f)?;
        }
        let ln_f = bind(g, store, self.ln_f);
        let h = apply_norm(g, h, &ln_f)?;
        let out = bind(g, store, self.out);
        let delta = apply_linear(g, h, &out)?;
        g.add(x, delta)
    }

    /// Prediction at the last stored position of each sequence (`B × d`).
    pub fn rollout(&self, g: &mut Graph, store: &ParamStore, seqs: &[Vec<Var>]) -> Result<Var> {
        let all = self.forward_all(g, store, seqs)?;
        let mut last = Vec::with_capacity(seqs.len());
        let mut end = 0;
        for s in seqs {
            end += s.len();
            last.push(end - 1);
        }
        g.gather_rows(all, &last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::grad_check_many;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(store: &mut ParamStore, seed: u64) -> RolloutModel {
        let cfg = RolloutConfig {
            width: 8,
            heads: 2,
            layers: 2,
            ff_hidden: 12,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RolloutModel::init(store, "r", cfg, 5, 4, &mut rng).unwrap()
    }

    fn seqs(g: &mut Graph, data: &[Vec<Vec<f64>>]) -> Vec<Vec<Var>> {
        data.iter()
            .map(|s| s.iter().map(|e| g.input(Tensor::row_vector(e))).collect())
            .collect()
    }

    fn sample(rng: &mut ChaCha8Rng, lens: &[usize]) -> Vec<Vec<Vec<f64>>> {
        lens.iter()
            .map(|&l| (0..l).map(|_| Tensor::uniform(&[5], 1.0, rng).into_data()).collect())
            .collect()
    }

    #[test]
    fn output_shape_and_determinism() {
        let mut store = ParamStore::new();
        let m = model(&mut store, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = sample(&mut rng, &[1, 3, 2]);
        let run = || {
            let mut g = Graph::new();
            let s = seqs(&mut g, &data);
            let r = m.rollout(&mut g, &store, &s).unwrap();
            g.value(r).clone()
        };
        let a = run();
        assert_eq!(a.shape(), &[3, 5]);
        assert_eq!(a, run());
    }

    #[test]
    fn buffers_are_independent() {
        let mut store = ParamStore::new();
        let m = model(&mut store, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = sample(&mut rng, &[3, 2]);
        let mut g = Graph::new();
        let s = seqs(&mut g, &data);
        let joint = m.rollout(&mut g, &store, &s).unwrap();
        let alone = m.rollout(&mut g, &store, &s[..1]).unwrap();
        let d = g.value(joint).row(0).iter().zip(g.value(alone).row(0));
        for (a, b) in d {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_or_long_sequences_are_rejected() {
        let mut store = ParamStore::new();
        let m = model(&mut store, 0);
        let mut g = Graph::new();
        assert!(m.rollout(&mut g, &store, &[]).is_err());
        assert!(m.rollout(&mut g, &store, &[vec![]]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = sample(&mut rng, &[5]);
        let s = seqs(&mut g, &data);
        assert!(m.rollout(&mut g, &store, &s).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let m = model(&mut store, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = sample(&mut rng, &[2, 3]);
        let w = Tensor::uniform(&[2, 5], 1.0, &mut rng);
        let mut points: Vec<Tensor> = data
            .iter()
            .flatten()
            .map(|e| Tensor::row_vector(e))
            .collect();
        let ids = m.param_ids();
        points.extend(ids.iter().map(|&id| store.get(id).clone()));
        let n_tok = 5;
        let report = grad_check_many(
            |g, vars| {
                for (k, &id) in ids.iter().enumerate() {
                    g.override_param(id, vars[n_tok + k]);
                }
                let s = vec![vars[..2].to_vec(), vars[2..5].to_vec()];
                let r = m.rollout(g, &store, &s)?;
                let wv = g.input(w.clone());
                let p = g.mul(r, wv)?;
                Ok(g.sum(p))
            },
            &points,
            1e-5,
        );
        let report = report.unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }
}

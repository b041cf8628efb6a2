//! Tape-based reverse-mode autodiff.
//!
//! Every operation appends a node holding its forward value; `backward`
//! walks the tape in reverse. Nodes are append-only, so a `Var` is a plain
//! index and the graph can be dropped wholesale after each step.

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for an operation defined outside this module.
pub trait CustomOp {
    /// Gradients for each input given the upstream gradient of the output.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Gelu(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    RowSum(Var),
    MaskedSoftmax {
        logits: Var,
        mask: Option<Var>,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    PairMeanSq(Var, Var),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    overrides: std::collections::BTreeMap<ParamId, Var>,
}

fn shape_err(what: &str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape()))
}

fn gelu_fwd(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let inner = C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that records its gradient (used by gradient checks).
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.overrides.get(&id) {
            return v;
        }
        self.push(store.get(id).clone(), Op::Param(id), true)
    }

    /// Makes later `param(_, id)` calls return `v` instead of a fresh
    /// parameter node. Lets gradient checks perturb parameters.
    pub fn override_param(&mut self, id: ParamId, v: Var) {
        self.overrides.insert(id, v);
    }

    /// Copy of `v`'s value cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.input(t)
    }

    pub fn custom(&mut self, inputs: Vec<Var>, value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(value, Op::Custom(inputs, op), needs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::tensor::matmul(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let needs = self.needs(a);
        self.push(out, Op::Transpose(a), needs)
    }

    fn zip_same(&self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(what, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), needs))
    }

    /// `x[m,n] + b[1,n]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let n = tx.cols();
        if tb.numel() != n {
            return Err(shape_err("add_row", tx, tb));
        }
        let mut out = tx.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &bb) in row.iter_mut().zip(tb.data()) {
                *o += bb;
            }
        }
        let needs = self.needs(x) || self.needs(b);
        Ok(self.push(out, Op::AddRow(x, b), needs))
    }

    /// `x[m,n] * c[m,1]` broadcast over columns.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Result<Var> {
        let (tx, tc) = (self.value(x), self.value(c));
        let (m, n) = (tx.rows(), tx.cols());
        if tc.numel() != m {
            return Err(shape_err("mul_col", tx, tc));
        }
        let mut out = tx.clone();
        for (row, &s) in out.data_mut().chunks_mut(n).zip(tc.data()) {
            for o in row {
                *o *= s;
            }
        }
        let needs = self.needs(x) || self.needs(c);
        Ok(self.push(out, Op::MulCol(x, c), needs))
    }

    /// Elementwise `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| scale * v + shift).collect();
        let out = Tensor::new(tx.shape(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(out, Op::Affine(x, scale), needs)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::new(tx.shape(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(out, op, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.map(x, f64::ln, Op::Ln(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, gelu_fwd, Op::Gelu(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), needs)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel() as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Row sums, `[m,n] -> [m,1]`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        let data = tx.data().chunks(n).map(|r| r.iter().sum()).collect();
        let out = Tensor::new(&[m, 1], data).expect("shape");
        let needs = self.needs(x);
        self.push(out, Op::RowSum(x), needs)
    }

    /// Row-wise softmax. With a mask, each weight is gated by its mask
    /// value and the row renormalized; zero-mask positions get exactly 0.
    pub fn masked_softmax(&mut self, logits: Var, mask: Option<Var>) -> Result<Var> {
        let tl = self.value(logits);
        let (m, n) = (tl.rows(), tl.cols());
        if let Some(mk) = mask {
            let tm = self.value(mk);
            if tm.shape() != tl.shape() {
                return Err(shape_err("masked_softmax mask", tl, tm));
            }
            if tm.data().iter().any(|&v| v < 0.0) {
                return Err(Error::Shape("negative attention mask entry".into()));
            }
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = tl.row(i);
            let mrow = mask.map(|mk| self.value(mk).row(i));
            let live = |j: usize| mrow.map_or(1.0, |r| r[j]);
            let mut mx = f64::NEG_INFINITY;
            for (j, &l) in row.iter().enumerate() {
                if live(j) > 0.0 && l > mx {
                    mx = l;
                }
            }
            if mx == f64::NEG_INFINITY {
                return Err(Error::DegenerateMask { row: i });
            }
            let mut z = 0.0;
            for j in 0..n {
                let w = live(j) * (row[j] - mx).exp();
                out[i * n + j] = w;
                z += w;
            }
            if !(z > 0.0) {
                return Err(Error::DegenerateMask { row: i });
            }
            for w in &mut out[i * n..(i + 1) * n] {
                *w /= z;
            }
        }
        let needs = self.needs(logits) || mask.is_some_and(|mk| self.needs(mk));
        let out = Tensor::new(&[m, n], out)?;
        Ok(self.push(out, Op::MaskedSoftmax { logits, mask }, needs))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.numel() != n || tb.numel() != n {
            return Err(shape_err("layer_norm", tx, tg));
        }
        let mut xhat = vec![0.0; m * n];
        let mut out = vec![0.0; m * n];
        let mut inv_std = Vec::with_capacity(m);
        for i in 0..m {
            let row = tx.row(i);
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            for j in 0..n {
                let h = (row[j] - mu) * is;
                xhat[i * n + j] = h;
                out[i * n + j] = h * tg.data()[j] + tb.data()[j];
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        let out = Tensor::new(&[m, n], out)?;
        let xhat = Tensor::new(&[m, n], xhat)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            needs,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        let (m, n) = (tx.rows(), tx.cols());
        if start + len > n || len == 0 {
            return Err(Error::Shape(format!("slice_cols {start}+{len} of {n}")));
        }
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&tx.row(i)[start..start + len]);
        }
        let out = Tensor::new(&[m, len], data)?;
        let needs = self.needs(x);
        Ok(self.push(out, Op::SliceCols(x, start), needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != m) {
            return Err(Error::Shape("concat_cols row mismatch".into()));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(&[m, total], data)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::stack_rows(&refs)?;
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), needs))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        if idx.is_empty() || idx.iter().any(|&i| i >= tx.rows()) {
            return Err(Error::Shape(format!(
                "gather_rows {idx:?} from {} rows",
                tx.rows()
            )));
        }
        let out = tx.select_rows(idx);
        let needs = self.needs(x);
        Ok(self.push(out, Op::GatherRows(x, idx.to_vec()), needs))
    }

    pub fn row(&mut self, x: Var, i: usize) -> Result<Var> {
        self.gather_rows(x, &[i])
    }

    /// Pairwise mean squared distance between rows: `out[i,j] = mean_k (a_ik - b_jk)^2`.
    pub fn pair_mean_sq(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (na, nb, k) = (ta.rows(), tb.rows(), ta.cols());
        if tb.cols() != k {
            return Err(shape_err("pair_mean_sq", ta, tb));
        }
        let mut out = vec![0.0; na * nb];
        for i in 0..na {
            let ra = ta.row(i);
            for j in 0..nb {
                let rb = tb.row(j);
                let s: f64 = ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum();
                out[i * nb + j] = s / k as f64;
            }
        }
        let out = Tensor::new(&[na, nb], out)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::PairMeanSq(a, b), needs))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                lv.shape()
            )));
        }
        if !lv.item().is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.propagate(i, &g, &mut grads)?;
            }
            grads[i] = Some(g);
        }
        let mut params = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                params.push((id, Var(i)));
            }
        }
        Ok(Grads { grads, params })
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        let acc = |v: Var, t: Tensor, grads: &mut [Option<Tensor>]| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let elementwise = |x: Var, f: &dyn Fn(f64, f64, f64) -> f64| -> Tensor {
            let tx = self.value(x);
            let data = tx
                .data()
                .iter()
                .zip(out.data())
                .zip(g.data())
                .map(|((&xv, &yv), &gv)| f(xv, yv, gv))
                .collect();
            Tensor::new(tx.shape(), data).expect("shape")
        };
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    // dA = dC · Bᵀ
                    gemm(m, n, k, g.data(), n as isize, 1, tb.data(), 1, n as isize, 0.0, &mut da);
                    acc(*a, Tensor::new(ta.shape(), da)?, grads);
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    // dB = Aᵀ · dC
                    gemm(k, m, n, ta.data(), 1, k as isize, g.data(), n as isize, 1, 0.0, &mut db);
                    acc(*b, Tensor::new(tb.shape(), db)?, grads);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose().reshape(self.shape(*a))?, grads),
            Op::Add(a, b) => {
                acc(*a, g.clone(), grads);
                acc(*b, g.clone(), grads);
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone(), grads);
                let neg = g.data().iter().map(|v| -v).collect();
                acc(*b, Tensor::new(g.shape(), neg)?, grads);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let d = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                    acc(*a, Tensor::new(g.shape(), d)?, grads);
                }
                if self.needs(*b) {
                    let d = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                    acc(*b, Tensor::new(g.shape(), d)?, grads);
                }
            }
            Op::AddRow(x, b) => {
                acc(*x, g.clone(), grads);
                if self.needs(*b) {
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(*b, Tensor::new(self.shape(*b), db)?, grads);
                }
            }
            Op::MulCol(x, c) => {
                let (tx, tc) = (self.value(*x), self.value(*c));
                let n = tx.cols();
                if self.needs(*x) {
                    let mut dx = g.clone();
                    for (row, &s) in dx.data_mut().chunks_mut(n).zip(tc.data()) {
                        for v in row {
                            *v *= s;
                        }
                    }
                    acc(*x, dx, grads);
                }
                if self.needs(*c) {
                    let dc = g
                        .data()
                        .chunks(n)
                        .zip(tx.data().chunks(n))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    acc(*c, Tensor::new(tc.shape(), dc)?, grads);
                }
            }
            Op::Affine(x, s) => {
                let d = g.data().iter().map(|v| v * s).collect();
                acc(*x, Tensor::new(g.shape(), d)?, grads);
            }
            Op::Sigmoid(x) => acc(*x, elementwise(*x, &|_, y, gv| gv * y * (1.0 - y)), grads),
            Op::Exp(x) => acc(*x, elementwise(*x, &|_, y, gv| gv * y), grads),
            Op::Ln(x) => acc(*x, elementwise(*x, &|xv, _, gv| gv / xv), grads),
            Op::Gelu(x) => acc(*x, elementwise(*x, &|xv, _, gv| gv * gelu_grad(xv)), grads),
            Op::Clamp(x, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                acc(
                    *x,
                    elementwise(*x, &|xv, _, gv| if xv > lo && xv < hi { gv } else { 0.0 }),
                    grads,
                )
            }
            Op::Sum(x) => acc(*x, Tensor::filled(self.shape(*x), g.item()), grads),
            Op::RowSum(x) => {
                let tx = self.value(*x);
                let n = tx.cols();
                let mut d = Vec::with_capacity(tx.numel());
                for &gv in g.data() {
                    d.extend(std::iter::repeat(gv).take(n));
                }
                acc(*x, Tensor::new(tx.shape(), d)?, grads);
            }
            Op::MaskedSoftmax { logits, mask } => {
                let (m, n) = (out.rows(), out.cols());
                let mut dl = vec![0.0; m * n];
                let mut dm = vec![0.0; m * n];
                let tl = self.value(*logits);
                for r in 0..m {
                    let w = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = w.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dl[r * n + j] = w[j] * (gr[j] - dot);
                    }
                    if let Some(mk) = mask {
                        if self.needs(*mk) {
                            let mrow = self.value(*mk).row(r);
                            let lrow = tl.row(r);
                            let mut mx = f64::NEG_INFINITY;
                            for j in 0..n {
                                if mrow[j] > 0.0 && lrow[j] > mx {
                                    mx = lrow[j];
                                }
                            }
                            let z: f64 = (0..n).map(|j| mrow[j] * (lrow[j] - mx).exp()).sum();
                            for j in 0..n {
                                let u = (lrow[j] - mx).min(60.0).exp() / z;
                                dm[r * n + j] = u * (gr[j] - dot);
                            }
                        }
                    }
                }
                acc(*logits, Tensor::new(&[m, n], dl)?, grads);
                if let Some(mk) = mask {
                    acc(*mk, Tensor::new(&[m, n], dm)?, grads);
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let (m, n) = (out.rows(), out.cols());
                let tg = self.value(*gain);
                let mut dx = vec![0.0; m * n];
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for r in 0..m {
                    let gr = g.row(r);
                    let hr = xhat.row(r);
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for j in 0..n {
                        let dh = gr[j] * tg.data()[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                        dgain[j] += gr[j] * hr[j];
                        dbias[j] += gr[j];
                    }
                    mean_dh /= n as f64;
                    mean_dh_h /= n as f64;
                    for j in 0..n {
                        let dh = gr[j] * tg.data()[j];
                        dx[r * n + j] = inv_std[r] * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
                acc(*x, Tensor::new(self.shape(*x), dx)?, grads);
                acc(*gain, Tensor::new(self.shape(*gain), dgain)?, grads);
                acc(*bias, Tensor::new(self.shape(*bias), dbias)?, grads);
            }
            Op::SliceCols(x, start) => {
                let tx = self.value(*x);
                let (m, n) = (tx.rows(), tx.cols());
                let len = g.cols();
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    d[r * n + start..r * n + start + len].copy_from_slice(g.row(r));
                }
                acc(*x, Tensor::new(tx.shape(), d)?, grads);
            }
            Op::ConcatCols(parts) => {
                let m = g.rows();
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for r in 0..m {
                            d.extend_from_slice(&g.row(r)[off..off + w]);
                        }
                        acc(p, Tensor::new(self.shape(p), d)?, grads);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut off = 0;
                for &p in parts {
                    let r = self.value(p).rows();
                    if self.needs(p) {
                        let d = g.data()[off * n..(off + r) * n].to_vec();
                        acc(p, Tensor::new(self.shape(p), d)?, grads);
                    }
                    off += r;
                }
            }
            Op::GatherRows(x, idx) => {
                let tx = self.value(*x);
                let n = tx.cols();
                let mut d = vec![0.0; tx.numel()];
                for (k, &src) in idx.iter().enumerate() {
                    for j in 0..n {
                        d[src * n + j] += g.data()[k * n + j];
                    }
                }
                acc(*x, Tensor::new(tx.shape(), d)?, grads);
            }
            Op::PairMeanSq(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (na, nb, k) = (ta.rows(), tb.rows(), ta.cols());
                let mut da = vec![0.0; na * k];
                let mut db = vec![0.0; nb * k];
                let c = 2.0 / k as f64;
                for i in 0..na {
                    for j in 0..nb {
                        let gv = g.data()[i * nb + j] * c;
                        if gv == 0.0 {
                            continue;
                        }
                        for t in 0..k {
                            let diff = ta.data()[i * k + t] - tb.data()[j * k + t];
                            da[i * k + t] += gv * diff;
                            db[j * k + t] -= gv * diff;
                        }
                    }
                }
                acc(*a, Tensor::new(ta.shape(), da)?, grads);
                acc(*b, Tensor::new(tb.shape(), db)?, grads);
            }
            Op::Custom(inputs, op) => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let ds = op.backward(&ins, out, g);
                for (&v, d) in inputs.iter().zip(ds) {
                    if let Some(d) = d {
                        acc(v, d, grads);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass.
pub struct Grads {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Grads {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// One gradient per parameter in `store` order; unused parameters get zeros.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        for &(id, v) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                out[id.0].add_assign(g);
            }
        }
        out
    }
}

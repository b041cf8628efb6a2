//! Central finite-difference check of analytic gradients.

use super::graph::{Graph, Var};
use super::Tensor;
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// (input index, coordinate) of the worst coordinate.
    pub worst: (usize, usize),
}

fn eval<F>(f: &F, points: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.variable(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let v = g.value(out);
    if v.numel() != 1 {
        return Err(Error::Shape(format!("grad_check closure returned {:?}", v.shape())));
    }
    Ok(v.item())
}

/// Compares the analytic gradient of a scalar function of several tensors
/// against central differences; returns the max relative error over all
/// coordinates.
///
/// A coordinate whose difference quotient changes materially when the step
/// is halved is treated as a kink and reported as [`Error::NonSmooth`].
pub fn grad_check_many<F>(f: F, points: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("grad_check eps {eps} outside [1e-7, 1e-3]")));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = points.iter().map(|p| g.variable(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let mut worst = (0, 0);
    let mut max_err = 0.0f64;
    let mut pts: Vec<Tensor> = points.to_vec();
    for (pi, &v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(points[pi].shape()));
        for c in 0..points[pi].numel() {
            let x0 = points[pi].data()[c];
            let mut diff = |h: f64| -> Result<f64> {
                pts[pi].data_mut()[c] = x0 + h;
                let fp = eval(&f, &pts)?;
                pts[pi].data_mut()[c] = x0 - h;
                let fm = eval(&f, &pts)?;
                pts[pi].data_mut()[c] = x0;
                Ok((fp - fm) / (2.0 * h))
            };
            let n1 = diff(eps)?;
            let n2 = diff(eps / 2.0)?;
            if !n1.is_finite() || !n2.is_finite() {
                return Err(Error::NonFinite("finite difference".into()));
            }
            if (n1 - n2).abs() > 0.1 * n1.abs().max(n2.abs()) + 1e-4 {
                return Err(Error::NonSmooth { input: pi, coord: c });
            }
            let a = analytic.data()[c];
            let err = (a - n1).abs() / a.abs().max(n1.abs()).max(REL_FLOOR);
            if err > max_err {
                max_err = err;
                worst = (pi, c);
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_err,
        worst,
    })
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    grad_check_many(|g, vs| f(g, vs[0]), std::slice::from_ref(point), eps).map(|r| r.max_rel_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_form_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::uniform(&[4, 4], 1.0, &mut rng);
        let x = Tensor::uniform(&[1, 4], 1.0, &mut rng);
        let err = grad_check(
            |g, x| {
                let av = g.input(a.clone());
                let ax = g.matmul(x, av)?;
                let p = g.mul(ax, x)?;
                Ok(g.sum(p))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn softmax_then_log() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::uniform(&[3, 5], 2.0, &mut rng);
        let w = Tensor::uniform(&[3, 5], 1.0, &mut rng);
        let err = grad_check(
            |g, x| {
                let s = g.masked_softmax(x, None)?;
                let l = g.ln(s);
                let wv = g.input(w.clone());
                let p = g.mul(l, wv)?;
                Ok(g.sum(p))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn elementwise_and_structural_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = vec![
            Tensor::uniform(&[3, 4], 1.0, &mut rng),
            Tensor::uniform(&[1, 4], 1.0, &mut rng),
            Tensor::uniform(&[3, 1], 1.0, &mut rng),
            Tensor::uniform(&[1, 4], 1.0, &mut rng),
            Tensor::uniform(&[1, 4], 1.0, &mut rng),
            Tensor::uniform(&[2, 4], 1.0, &mut rng),
        ];
        let rep = grad_check_many(
            |g, v| {
                let a = g.add_row(v[0], v[1])?;
                let a = g.mul_col(a, v[2])?;
                let a = g.gelu(a);
                let a = g.layer_norm(a, v[3], v[4], 1e-5)?;
                let s = g.sigmoid(a);
                let e = g.exp(s);
                let t = g.transpose(e);
                let sl = g.slice_cols(t, 1, 2)?;
                let cat = g.concat_cols(&[sl, sl])?;
                let rows = g.gather_rows(cat, &[0, 3, 3])?;
                let pd = g.pair_mean_sq(rows, v[5])?;
                let other = g.row_sum(pd);
                let stacked = g.concat_rows(&[other, other])?;
                let c = g.affine(stacked, 0.5, 0.1);
                let c = g.clamp(c, -10.0, 10.0);
                Ok(g.mean(c))
            },
            &pts,
            1e-5,
        )
        .unwrap();
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");
    }

    #[test]
    fn rejects_out_of_range_eps() {
        let x = Tensor::scalar(1.0);
        assert!(grad_check(|g, x| Ok(g.sum(x)), &x, 1e-2).is_err());
    }

    #[test]
    fn kink_is_reported() {
        let x = Tensor::scalar(3e-6);
        let res = grad_check(|g, x| Ok(g.clamp(x, 0.0, 1.0)), &x, 1e-5);
        assert!(matches!(res, Err(Error::NonSmooth { .. })), "{res:?}");
    }
}

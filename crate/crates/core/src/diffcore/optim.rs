use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Per-step multiplicative learning-rate decay.
    pub lr_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 0.9995,
        }
    }
}

/// Adam with bias correction and exponential learning-rate decay.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros = |p: &ParamStore| p.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(params),
            v: zeros(params),
        }
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * self.config.lr_decay.powf(self.step as f64)
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (p, g) in params.tensors().iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient {:?} for parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite("gradient".into()));
            }
        }
        let lr = self.current_lr();
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(v));
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = one_param(0.75);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        opt.step(&mut p, &[Tensor::scalar(0.0)]).unwrap();
        assert_eq!(p.tensors()[0].item(), 0.75);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = one_param(1.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg, &p);
        opt.step(&mut p, &[Tensor::scalar(1.0)]).unwrap();
        // mhat = vhat = 1 at t=1, so the step is lr / (1 + eps).
        let expect = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.tensors()[0].item() - expect).abs() < 1e-15);
        assert!((p.tensors()[0].item() - 0.9).abs() < 1e-6);
    }

    #[test]
    fn identical_calls_are_bitwise_identical() {
        let run = || {
            let mut p = one_param(0.3);
            let mut opt = Adam::new(AdamConfig::default(), &p);
            for _ in 0..5 {
                opt.step(&mut p, &[Tensor::scalar(0.123)]).unwrap();
            }
            p.tensors()[0].item().to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn decay_shrinks_learning_rate() {
        let p = one_param(0.0);
        let mut opt = Adam::new(
            AdamConfig {
                lr: 1.0,
                lr_decay: 0.5,
                ..AdamConfig::default()
            },
            &p,
        );
        opt.step = 3;
        assert_eq!(opt.current_lr(), 0.125);
    }

    #[test]
    fn rejects_bad_gradients() {
        let mut p = one_param(0.0);
        let mut opt = Adam::new(AdamConfig::default(), &p);
        assert!(opt.step(&mut p, &[Tensor::scalar(f64::NAN)]).is_err());
        assert!(opt.step(&mut p, &[Tensor::zeros(&[2])]).is_err());
        assert!(opt.step(&mut p, &[]).is_err());
    }
}

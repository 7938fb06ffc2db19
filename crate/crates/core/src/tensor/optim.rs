use crate::error::{Error, Result};

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> OptimizerKind {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Adam with a custom first-moment decay (GAN training commonly runs
    /// β1 = 0.5).
    pub fn adam_beta1(beta1: f64) -> OptimizerKind {
        OptimizerKind::Adam {
            beta1,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Gradient-descent update over a fixed parameter set.
///
/// Adam state is zero-initialized and shape-matched per parameter; a step
/// touches only parameters that currently hold a gradient.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    params: Vec<Tensor>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: Vec<u64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, params: Vec<Tensor>) -> Result<Optimizer> {
        if !(lr > 0.0) {
            return Err(Error::contract(format!("learning rate must be > 0, got {lr}")));
        }
        let m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        let t = vec![0; params.len()];
        Ok(Optimizer {
            kind,
            lr,
            params,
            m,
            v,
            t,
        })
    }

    pub fn sgd(lr: f64, params: Vec<Tensor>) -> Result<Optimizer> {
        Optimizer::new(OptimizerKind::Sgd, lr, params)
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn zero_grad(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// Applies one update. Errors if no parameter in the set carries a
    /// gradient (a missing backward call); parameters without a gradient are
    /// left untouched.
    pub fn step(&mut self) -> Result<()> {
        if self.params.iter().all(|p| !p.has_grad()) {
            return Err(Error::contract(
                "optimizer step with no gradients populated",
            ));
        }
        for (i, p) in self.params.iter().enumerate() {
            let grad = match p.grad() {
                Some(g) => g,
                None => continue,
            };
            let mut data = p.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, g) in data.iter_mut().zip(&grad) {
                        *w -= self.lr * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    self.t[i] += 1;
                    let t = self.t[i] as i32;
                    let bc1 = 1.0 - beta1.powi(t);
                    let bc2 = 1.0 - beta2.powi(t);
                    let m = &mut self.m[i];
                    let v = &mut self.v[i];
                    for j in 0..grad.len() {
                        let g = grad[j];
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                        let m_hat = m[j] / bc1;
                        let v_hat = v[j] / bc2;
                        data[j] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
            if data.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFinite { op: "optimizer_step" });
            }
        }
        Ok(())
    }
}

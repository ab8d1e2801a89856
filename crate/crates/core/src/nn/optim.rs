//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::ParamVector;

/// Update rule and its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> OptimizerKind {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Learning rate plus rule; the serializable piece of trainer configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimSpec {
    pub lr: f64,
    #[serde(flatten)]
    pub kind: OptimizerKind,
}

impl OptimSpec {
    pub fn adam(lr: f64) -> OptimSpec {
        OptimSpec { lr, kind: OptimizerKind::adam_default() }
    }

    pub fn sgd(lr: f64) -> OptimSpec {
        OptimSpec { lr, kind: OptimizerKind::Sgd }
    }

    pub fn build(&self, param_len: usize) -> Optimizer {
        Optimizer::new(self.kind, self.lr, param_len)
    }
}

/// Optimizer with per-parameter state arrays sized to one network.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step_count: u64,
    /// Momentum buffer (sgd-momentum) or first moment (adam). Empty for sgd.
    m: Vec<f64>,
    /// Second moment (adam only).
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, param_len: usize) -> Optimizer {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::SgdMomentum { .. } => (vec![0.0; param_len], Vec::new()),
            OptimizerKind::Adam { .. } => (vec![0.0; param_len], vec![0.0; param_len]),
        };
        Optimizer { kind, lr, step_count: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one update in place. Gradient length must match the params.
    pub fn step(&mut self, params: &mut ParamVector, grads: &[f64]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "gradient length {} does not match parameter length {}",
                grads.len(),
                params.len()
            )));
        }
        match self.kind {
            OptimizerKind::SgdMomentum { .. } | OptimizerKind::Adam { .. } => {
                if self.m.len() != params.len() {
                    return Err(Error::Contract(format!(
                        "optimizer state length {} does not match parameter length {}",
                        self.m.len(),
                        params.len()
                    )));
                }
            }
            OptimizerKind::Sgd => {}
        }
        self.step_count += 1;
        let w = params.values_mut();
        match self.kind {
            OptimizerKind::Sgd => {
                for (wi, gi) in w.iter_mut().zip(grads) {
                    *wi -= self.lr * gi;
                }
            }
            OptimizerKind::SgdMomentum { momentum } => {
                for ((wi, mi), gi) in w.iter_mut().zip(&mut self.m).zip(grads) {
                    *mi = momentum * *mi + gi;
                    *wi -= self.lr * *mi;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.step_count as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for i in 0..w.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    w[i] -= self.lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}

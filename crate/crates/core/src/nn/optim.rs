//! Parameter update rules.

use serde::{Deserialize, Serialize};

use super::{Param, Scalar};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            OptimizerConfig::Sgd { lr } => lr > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Optimizer with per-parameter state, matched to parameters by position.
pub struct Optimizer<T> {
    pub config: OptimizerConfig,
    steps: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Self {
        Optimizer { config, steps: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients. `batch` only labels
    /// the error raised on non-finite gradients; nothing is modified then.
    pub fn step(&mut self, mut params: Vec<&mut Param<T>>, batch: usize) -> Result<()> {
        for p in &params {
            if let Some(i) = p.grad().iter().position(|g| !g.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in {} (element {i}) at batch {batch}",
                    p.name
                )));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(&params).any(|(m, p)| m.len() != p.len()) {
            return Err(Error::Shape("optimizer state does not match the parameter set".into()));
        }
        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { lr } => {
                let lr = T::of_f64(lr);
                for p in params.iter_mut() {
                    let (w, g) = p.split_mut();
                    for (w, &g) in w.iter_mut().zip(g.iter()) {
                        *w = *w - lr * g;
                    }
                }
            }
            OptimizerConfig::Adam { lr, beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let (b1, b2) = (T::of_f64(beta1), T::of_f64(beta2));
                let (lr, eps) = (T::of_f64(lr), T::of_f64(eps));
                let (c1, c2) = (T::of_f64(c1), T::of_f64(c2));
                for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    let (w, g) = p.split_mut();
                    for i in 0..w.len() {
                        m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                        v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                        let mh = m[i] / c1;
                        let vh = v[i] / c2;
                        w[i] = w[i] - lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Sgd { momentum: 0.9 }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u32,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, n_params: usize) -> Optimizer {
        let second = match config {
            OptimizerConfig::Adam { .. } => vec![0.0; n_params],
            OptimizerConfig::Sgd { .. } => Vec::new(),
        };
        Optimizer { config, first: vec![0.0; n_params], second, steps: 0 }
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.steps += 1;
        match self.config {
            OptimizerConfig::Sgd { momentum } => {
                for ((p, &g), v) in params.iter_mut().zip(grads).zip(self.first.iter_mut()) {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for k in 0..params.len() {
                    let g = grads[k];
                    self.first[k] = beta1 * self.first[k] + (1.0 - beta1) * g;
                    self.second[k] = beta2 * self.second[k] + (1.0 - beta2) * g * g;
                    let m = self.first[k] / c1;
                    let v = self.second[k] / c2;
                    params[k] -= lr * m / (v.sqrt() + eps);
                }
            }
        }
    }
}

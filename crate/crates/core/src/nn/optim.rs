use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    /// `w ← w − η g`
    Sgd,
    /// Bias-corrected Adam; the step is still scaled by the scheduled rate.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Applies one update with learning rate `lr`. Nothing is modified when a
    /// gradient is non-finite.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        let g = grads.tensors();
        if let Some(bad) = g.iter().position(|t| t.2.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteGradient { tensor: bad });
        }
        let p = params.tensors_mut();
        if p.len() != g.len() || p.iter().zip(&g).any(|(a, b)| a.len() != b.2.len()) {
            return Err(Error::Shape("optimizer: parameter and gradient layouts differ".into()));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, (_, _, gw)) in p.into_iter().zip(&g) {
                    for (wi, gi) in w.iter_mut().zip(gw.iter()) {
                        *wi -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                if self.first.is_empty() {
                    self.first = g.iter().map(|t| vec![0.0; t.2.len()]).collect();
                    self.second = self.first.clone();
                }
                self.steps += 1;
                let c1 = 1.0 - beta1.powi(self.steps as i32);
                let c2 = 1.0 - beta2.powi(self.steps as i32);
                for (ti, (w, (_, _, gw))) in p.into_iter().zip(&g).enumerate() {
                    let (m, v) = (&mut self.first[ti], &mut self.second[ti]);
                    for k in 0..w.len() {
                        m[k] = beta1 * m[k] + (1.0 - beta1) * gw[k];
                        v[k] = beta2 * v[k] + (1.0 - beta2) * gw[k] * gw[k];
                        let update = (m[k] / c1) / ((v[k] / c2).sqrt() + epsilon);
                        w[k] -= lr * update;
                    }
                }
            }
        }
        Ok(())
    }
}

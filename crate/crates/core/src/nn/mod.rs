//! Small hand-written neural toolkit with exact reverse-mode gradients:
//! dense layers, LSTM cells, bidirectional runs, scalar-score attention,
//! softmax cross-entropy, optimizers and a finite-difference checker.

pub mod attention;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod model;
pub mod optim;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container::{Container, Tensor};
use crate::error::{Error, Result};

pub use attention::{attention_backward, attention_forward, AttentionOutput, AttentionParams};
pub use dense::DenseParams;
pub use gradcheck::{check_gradients, relative_error, GradCheckReport};
pub use loss::{softmax, softmax_cross_entropy};
pub use lstm::{bilstm_forward, lstm_step, BiLstmParams, GateParams, LstmCellParams};
pub use model::{BiLstmAttentionModel, ModelTrace};
pub use optim::{Optimizer, OptimizerKind};

/// A fixed, ordered collection of trainable tensors. Gradient containers are
/// values of the same type, so optimizers and checkers can zip the two.
pub trait Parameters {
    /// `(name, shape, data)` for every tensor, always in the same order.
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])>;

    /// Mutable views in the same order as [`Parameters::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    /// `self += a · other`
    fn add_scaled(&mut self, other: &Self, a: f64)
    where
        Self: Sized,
    {
        let src = other.tensors();
        for (dst, (_, _, s)) in self.tensors_mut().into_iter().zip(src) {
            crate::linalg::axpy(a, s, dst);
        }
    }

    fn scale(&mut self, a: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= a);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.2.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|v| v.is_finite()))
    }

    fn write_into(&self, prefix: &str, container: &mut Container) {
        for (name, shape, data) in self.tensors() {
            container.push(Tensor::new(format!("{prefix}{name}"), shape, data.to_vec()));
        }
    }

    /// Overwrites every tensor from `container`; names and shapes must match.
    fn read_from(&mut self, prefix: &str, container: &Container) -> Result<()> {
        let wanted: Vec<(String, Vec<usize>)> = self
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (format!("{prefix}{n}"), s))
            .collect();
        for ((name, shape), dst) in wanted.into_iter().zip(self.tensors_mut()) {
            let t = container.require(&name)?;
            if t.shape != shape {
                return Err(Error::Shape(format!(
                    "tensor {name}: stored shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            dst.copy_from_slice(&t.data);
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Logistic sigmoid, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Uniform samples in `±√(6 / (fan_in + fan_out))`.
pub fn uniform_init<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let bound = init_bound(fan_in, fan_out);
    (0..len).map(|_| rng.random_range(-bound..=bound)).collect()
}

pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

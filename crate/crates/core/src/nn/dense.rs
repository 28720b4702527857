use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{uniform_init, Parameters};

/// Fully connected layer `y = W x + b`, `W` is out × in.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseParams {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::from_vec(outputs, inputs, uniform_init(rng, inputs, outputs, inputs * outputs)),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape(format!(
                "dense layer expects {} inputs, got {}",
                self.inputs(),
                x.len()
            )));
        }
        let mut y = self.bias.clone();
        self.weight.matvec_acc(x, &mut y);
        Ok(y)
    }

    /// Accumulates `∂L/∂W`, `∂L/∂b` into `grads` and returns `∂L/∂x`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut DenseParams) -> Vec<f64> {
        grads.weight.outer_acc(dy, x);
        crate::linalg::axpy(1.0, dy, &mut grads.bias);
        let mut dx = vec![0.0; self.inputs()];
        self.weight.matvec_t_acc(dy, &mut dx);
        dx
    }
}

impl Parameters for DenseParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            (
                "weight".into(),
                vec![self.outputs(), self.inputs()],
                self.weight.as_slice(),
            ),
            ("bias".into(), vec![self.bias.len()], &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

//! Scalar-score attention: `e_j = tanh(w·h_j + b)`, `α = softmax(e)`,
//! `c = Σ_j α_j h_j`. One context vector per sequence.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::nn::{uniform_init, Parameters};

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    /// Length 2H.
    pub weight: Vec<f64>,
    /// Single element.
    pub bias: Vec<f64>,
}

impl AttentionParams {
    pub fn zeros(width: usize) -> Self {
        Self {
            weight: vec![0.0; width],
            bias: vec![0.0],
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, width: usize) -> Self {
        Self {
            weight: uniform_init(rng, width, 1, width),
            bias: vec![0.0],
        }
    }
}

impl Parameters for AttentionParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        vec![
            ("weight".into(), vec![1, self.weight.len()], &self.weight),
            ("bias".into(), vec![1], &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionOutput {
    pub context: Vec<f64>,
    /// α, a point on the simplex.
    pub weights: Vec<f64>,
    /// e_j after the tanh.
    pub scores: Vec<f64>,
}

/// Softmax of already-computed scores, shifted by their maximum.
pub fn attention_weights(scores: &[f64]) -> Vec<f64> {
    crate::nn::softmax(scores)
}

pub fn attention_forward(params: &AttentionParams, hs: &Matrix) -> Result<AttentionOutput> {
    if hs.rows() == 0 {
        return Err(Error::Shape("attention over an empty sequence".into()));
    }
    if hs.cols() != params.weight.len() {
        return Err(Error::Shape(format!(
            "attention width {} but states have {}",
            params.weight.len(),
            hs.cols()
        )));
    }
    let scores: Vec<f64> = (0..hs.rows())
        .map(|j| (dot(&params.weight, hs.row(j)) + params.bias[0]).tanh())
        .collect();
    let weights = attention_weights(&scores);
    let mut context = vec![0.0; hs.cols()];
    for (j, &a) in weights.iter().enumerate() {
        axpy(a, hs.row(j), &mut context);
    }
    Ok(AttentionOutput {
        context,
        weights,
        scores,
    })
}

/// Accumulates parameter gradients and returns `∂L/∂hs`.
pub fn attention_backward(
    params: &AttentionParams,
    hs: &Matrix,
    out: &AttentionOutput,
    d_context: &[f64],
    grads: &mut AttentionParams,
) -> Matrix {
    let t_len = hs.rows();
    let mut dh = Matrix::zeros(t_len, hs.cols());
    let d_alpha: Vec<f64> = (0..t_len).map(|j| dot(d_context, hs.row(j))).collect();
    let mean: f64 = out.weights.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
    for j in 0..t_len {
        let a = out.weights[j];
        let de = a * (d_alpha[j] - mean);
        let ds = de * (1.0 - out.scores[j] * out.scores[j]);
        axpy(ds, hs.row(j), &mut grads.weight);
        grads.bias[0] += ds;
        let row = dh.row_mut(j);
        axpy(a, d_context, row);
        axpy(ds, &params.weight, row);
    }
    dh
}

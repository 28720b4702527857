//! Bi-LSTM → attention → dense → softmax classifier with exact gradients.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::attention::{attention_backward, attention_forward, AttentionOutput, AttentionParams};
use crate::nn::dense::DenseParams;
use crate::nn::loss::{softmax, softmax_cross_entropy};
use crate::nn::lstm::{bilstm_backward, bilstm_trace, BiLstmParams, BiLstmTrace};
use crate::nn::Parameters;

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmAttentionModel {
    pub bilstm: BiLstmParams,
    pub attention: AttentionParams,
    /// 2H → C
    pub head: DenseParams,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ModelTrace {
    pub bilstm: BiLstmTrace,
    pub attention: AttentionOutput,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl BiLstmAttentionModel {
    pub fn zeros(features: usize, hidden: usize, classes: usize) -> Self {
        Self {
            bilstm: BiLstmParams::zeros(features, hidden),
            attention: AttentionParams::zeros(2 * hidden),
            head: DenseParams::zeros(2 * hidden, classes),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, features: usize, hidden: usize, classes: usize) -> Self {
        Self {
            bilstm: BiLstmParams::init(rng, features, hidden),
            attention: AttentionParams::init(rng, 2 * hidden),
            head: DenseParams::init(rng, 2 * hidden, classes),
        }
    }

    pub fn features(&self) -> usize {
        self.bilstm.features()
    }

    pub fn hidden(&self) -> usize {
        self.bilstm.hidden()
    }

    pub fn classes(&self) -> usize {
        self.head.outputs()
    }

    pub fn forward(&self, xs: &Matrix) -> Result<ModelTrace> {
        if xs.cols() != self.features() {
            return Err(Error::Shape(format!(
                "model expects {} features per step, got {}",
                self.features(),
                xs.cols()
            )));
        }
        let bilstm = bilstm_trace(&self.bilstm, xs)?;
        let attention = attention_forward(&self.attention, &bilstm.outputs)?;
        let logits = self.head.forward(&attention.context)?;
        let probabilities = softmax(&logits);
        Ok(ModelTrace {
            bilstm,
            attention,
            logits,
            probabilities,
        })
    }

    pub fn probabilities(&self, xs: &Matrix) -> Result<Vec<f64>> {
        self.forward(xs).map(|t| t.probabilities)
    }

    pub fn loss(&self, xs: &Matrix, label: usize) -> Result<f64> {
        let t = self.forward(xs)?;
        softmax_cross_entropy(&t.logits, label).map(|(l, _)| l)
    }

    /// Cross-entropy loss and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, xs: &Matrix, label: usize) -> Result<(f64, BiLstmAttentionModel)> {
        let trace = self.forward(xs)?;
        let (loss, probs) = softmax_cross_entropy(&trace.logits, label)?;
        let mut grads = Self::zeros(self.features(), self.hidden(), self.classes());
        let mut d_logits = probs;
        d_logits[label] -= 1.0;
        let d_context = self.head.backward(&trace.attention.context, &d_logits, &mut grads.head);
        let d_states = attention_backward(
            &self.attention,
            &trace.bilstm.outputs,
            &trace.attention,
            &d_context,
            &mut grads.attention,
        );
        bilstm_backward(&self.bilstm, &trace.bilstm, &d_states, &mut grads.bilstm);
        Ok((loss, grads))
    }
}

impl Parameters for BiLstmAttentionModel {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (prefix, ts) in [
            ("bilstm.", self.bilstm.tensors()),
            ("attention.", self.attention.tensors()),
            ("head.", self.head.tensors()),
        ] {
            out.extend(ts.into_iter().map(|(n, s, d)| (format!("{prefix}{n}"), s, d)));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.bilstm.tensors_mut();
        out.extend(self.attention.tensors_mut());
        out.extend(self.head.tensors_mut());
        out
    }
}

//! LSTM cells, sequence runs with backpropagation through time, and the
//! bidirectional wrapper that concatenates forward and backward states.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{sigmoid, uniform_init, Parameters};

/// Affine map of one gate: `W_x x + W_h h + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    /// H × F
    pub input: Matrix,
    /// H × H
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
}

impl GateParams {
    fn zeros(features: usize, hidden: usize) -> Self {
        Self {
            input: Matrix::zeros(hidden, features),
            recurrent: Matrix::zeros(hidden, hidden),
            bias: vec![0.0; hidden],
        }
    }

    fn init<R: Rng + ?Sized>(rng: &mut R, features: usize, hidden: usize) -> Self {
        Self {
            input: Matrix::from_vec(hidden, features, uniform_init(rng, features, hidden, hidden * features)),
            recurrent: Matrix::from_vec(hidden, hidden, uniform_init(rng, hidden, hidden, hidden * hidden)),
            bias: vec![0.0; hidden],
        }
    }

    fn preactivation(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut a = self.bias.clone();
        self.input.matvec_acc(x, &mut a);
        self.recurrent.matvec_acc(h, &mut a);
        a
    }

    fn backward(
        &self,
        da: &[f64],
        x: &[f64],
        h_prev: &[f64],
        grads: &mut GateParams,
        dx: &mut [f64],
        dh_prev: &mut [f64],
    ) {
        grads.input.outer_acc(da, x);
        grads.recurrent.outer_acc(da, h_prev);
        crate::linalg::axpy(1.0, da, &mut grads.bias);
        self.input.matvec_t_acc(da, dx);
        self.recurrent.matvec_t_acc(da, dh_prev);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    pub candidate: GateParams,
}

impl LstmCellParams {
    pub fn zeros(features: usize, hidden: usize) -> Self {
        Self {
            input_gate: GateParams::zeros(features, hidden),
            forget_gate: GateParams::zeros(features, hidden),
            output_gate: GateParams::zeros(features, hidden),
            candidate: GateParams::zeros(features, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, features: usize, hidden: usize) -> Self {
        Self {
            input_gate: GateParams::init(rng, features, hidden),
            forget_gate: GateParams::init(rng, features, hidden),
            output_gate: GateParams::init(rng, features, hidden),
            candidate: GateParams::init(rng, features, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.bias.len()
    }

    pub fn features(&self) -> usize {
        self.input_gate.input.cols()
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.input_gate, &self.forget_gate, &self.output_gate, &self.candidate]
    }

    fn gates_mut(&mut self) -> [&mut GateParams; 4] {
        [
            &mut self.input_gate,
            &mut self.forget_gate,
            &mut self.output_gate,
            &mut self.candidate,
        ]
    }

    fn check(&self, x: &[f64], h: &[f64], c: &[f64]) -> Result<()> {
        let (f, hd) = (self.features(), self.hidden());
        if x.len() != f || h.len() != hd || c.len() != hd {
            return Err(Error::Shape(format!(
                "lstm step expects x:{f}, h:{hd}, c:{hd}; got x:{}, h:{}, c:{}",
                x.len(),
                h.len(),
                c.len()
            )));
        }
        Ok(())
    }
}

impl Parameters for LstmCellParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let names = ["input_gate", "forget_gate", "output_gate", "candidate"];
        let (f, h) = (self.features(), self.hidden());
        let mut out = Vec::with_capacity(12);
        for (name, g) in names.iter().zip(self.gates()) {
            out.push((format!("{name}.input"), vec![h, f], g.input.as_slice()));
            out.push((format!("{name}.recurrent"), vec![h, h], g.recurrent.as_slice()));
            out.push((format!("{name}.bias"), vec![h], g.bias.as_slice()));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        for g in self.gates_mut() {
            out.push(g.input.as_mut_slice());
            out.push(g.recurrent.as_mut_slice());
            out.push(&mut g.bias);
        }
        out
    }
}

/// Everything one step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

fn step_cached(params: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let i: Vec<f64> = params
        .input_gate
        .preactivation(x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let f: Vec<f64> = params
        .forget_gate
        .preactivation(x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let o: Vec<f64> = params
        .output_gate
        .preactivation(x, h_prev)
        .into_iter()
        .map(sigmoid)
        .collect();
    let g: Vec<f64> = params
        .candidate
        .preactivation(x, h_prev)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let c: Vec<f64> = (0..i.len()).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h = o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        o,
        g,
        c,
        tanh_c,
        h,
    }
}

/// One LSTM transition, returning `(h_t, c_t)`.
pub fn lstm_step(params: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    params.check(x, h_prev, c_prev)?;
    let s = step_cached(params, x, h_prev, c_prev);
    Ok((s.h, s.c))
}

/// Runs the cell over `xs` in the given order from a zero state.
pub fn run_sequence(params: &LstmCellParams, xs: &[&[f64]]) -> Result<Vec<StepCache>> {
    let hidden = params.hidden();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut caches = Vec::with_capacity(xs.len());
    for x in xs {
        params.check(x, &h, &c)?;
        let s = step_cached(params, x, &h, &c);
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        caches.push(s);
    }
    Ok(caches)
}

/// Backpropagation through time. `dh[t]` is the loss gradient arriving at
/// the output of step `t` (same order as the forward run). Accumulates into
/// `grads` and returns the gradient with respect to each input.
pub fn backward_sequence(
    params: &LstmCellParams,
    caches: &[StepCache],
    dh: &[Vec<f64>],
    grads: &mut LstmCellParams,
) -> Vec<Vec<f64>> {
    let hidden = params.hidden();
    let features = params.features();
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dxs = vec![vec![0.0; features]; caches.len()];
    let mut da = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];
    for t in (0..caches.len()).rev() {
        let s = &caches[t];
        let mut dc_prev = vec![0.0; hidden];
        for k in 0..hidden {
            let dh_k = dh[t][k] + dh_next[k];
            let d_o = dh_k * s.tanh_c[k];
            let dc = dc_next[k] + dh_k * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            let d_i = dc * s.g[k];
            let d_g = dc * s.i[k];
            let d_f = dc * s.c_prev[k];
            dc_prev[k] = dc * s.f[k];
            da[0][k] = d_i * s.i[k] * (1.0 - s.i[k]);
            da[1][k] = d_f * s.f[k] * (1.0 - s.f[k]);
            da[2][k] = d_o * s.o[k] * (1.0 - s.o[k]);
            da[3][k] = d_g * (1.0 - s.g[k] * s.g[k]);
        }
        let mut dh_prev = vec![0.0; hidden];
        for ((gate, ggrad), dag) in params.gates().into_iter().zip(grads.gates_mut()).zip(&da) {
            gate.backward(dag, &s.x, &s.h_prev, ggrad, &mut dxs[t], &mut dh_prev);
        }
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    dxs
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmCellParams,
    pub backward: LstmCellParams,
}

impl BiLstmParams {
    pub fn zeros(features: usize, hidden: usize) -> Self {
        Self {
            forward: LstmCellParams::zeros(features, hidden),
            backward: LstmCellParams::zeros(features, hidden),
        }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R, features: usize, hidden: usize) -> Self {
        Self {
            forward: LstmCellParams::init(rng, features, hidden),
            backward: LstmCellParams::init(rng, features, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn features(&self) -> usize {
        self.forward.features()
    }
}

impl Parameters for BiLstmParams {
    fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<_> = self
            .forward
            .tensors()
            .into_iter()
            .map(|(n, s, d)| (format!("forward.{n}"), s, d))
            .collect();
        out.extend(
            self.backward
                .tensors()
                .into_iter()
                .map(|(n, s, d)| (format!("backward.{n}"), s, d)),
        );
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.forward.tensors_mut();
        out.extend(self.backward.tensors_mut());
        out
    }
}

/// Cached forward and backward runs over one sequence.
#[derive(Clone, Debug)]
pub struct BiLstmTrace {
    pub forward: Vec<StepCache>,
    /// Caches of the reversed run: entry `k` processed input `T − 1 − k`.
    pub backward: Vec<StepCache>,
    /// T × 2H, row j = [forward_j ; backward_j].
    pub outputs: Matrix,
}

pub fn bilstm_trace(params: &BiLstmParams, xs: &Matrix) -> Result<BiLstmTrace> {
    let t_len = xs.rows();
    if t_len == 0 {
        return Err(Error::Shape("bilstm needs a non-empty sequence".into()));
    }
    if params.forward.hidden() != params.backward.hidden() || params.forward.features() != params.backward.features() {
        return Err(Error::Shape("bilstm directions disagree on H or F".into()));
    }
    let order: Vec<&[f64]> = (0..t_len).map(|t| xs.row(t)).collect();
    let reversed: Vec<&[f64]> = order.iter().rev().copied().collect();
    let fwd = run_sequence(&params.forward, &order)?;
    let bwd = run_sequence(&params.backward, &reversed)?;
    let h = params.hidden();
    let mut outputs = Matrix::zeros(t_len, 2 * h);
    for j in 0..t_len {
        let row = outputs.row_mut(j);
        row[..h].copy_from_slice(&fwd[j].h);
        row[h..].copy_from_slice(&bwd[t_len - 1 - j].h);
    }
    Ok(BiLstmTrace {
        forward: fwd,
        backward: bwd,
        outputs,
    })
}

/// Bidirectional pass over a T × F sequence; returns T × 2H.
pub fn bilstm_forward(params: &BiLstmParams, xs: &Matrix) -> Result<Matrix> {
    bilstm_trace(params, xs).map(|t| t.outputs)
}

/// Given `∂L/∂outputs` (T × 2H), accumulates parameter gradients and returns
/// `∂L/∂xs` (T × F).
pub fn bilstm_backward(
    params: &BiLstmParams,
    trace: &BiLstmTrace,
    d_outputs: &Matrix,
    grads: &mut BiLstmParams,
) -> Matrix {
    let t_len = trace.outputs.rows();
    let h = params.hidden();
    let dh_fwd: Vec<Vec<f64>> = (0..t_len).map(|j| d_outputs.row(j)[..h].to_vec()).collect();
    let dh_bwd: Vec<Vec<f64>> = (0..t_len).map(|k| d_outputs.row(t_len - 1 - k)[h..].to_vec()).collect();
    let dx_f = backward_sequence(&params.forward, &trace.forward, &dh_fwd, &mut grads.forward);
    let dx_b = backward_sequence(&params.backward, &trace.backward, &dh_bwd, &mut grads.backward);
    let f = params.features();
    let mut dx = Matrix::zeros(t_len, f);
    for j in 0..t_len {
        let row = dx.row_mut(j);
        for k in 0..f {
            row[k] = dx_f[j][k] + dx_b[t_len - 1 - j][k];
        }
    }
    dx
}

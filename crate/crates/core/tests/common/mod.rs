//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use mdrr_core::linalg::Matrix;
use rand::Rng;

/// O(n²) discrete Fourier transform.
pub fn dft(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        for t in 0..n {
            let a = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
            out_re[k] += re[t] * a.cos() - im[t] * a.sin();
            out_im[k] += re[t] * a.sin() + im[t] * a.cos();
        }
    }
    (out_re, out_im)
}

/// Element-by-element rearrangement of a D × N matrix: output position
/// `k` belongs to slice `k / (D·N')`, frame `(k mod D·N') / D` within the
/// slice and coefficient `k mod D`.
pub fn rearrange_oracle(m: &Matrix, slice_len: usize, max_dim: usize) -> Vec<f64> {
    let (d, n) = m.shape();
    let m_slices = n.div_ceil(slice_len);
    let width = d * slice_len;
    (0..max_dim)
        .map(|k| {
            let slice = k / width;
            let within = k % width;
            let t = slice * slice_len + within / d;
            if slice < m_slices && t < n {
                m.get(within % d, t)
            } else {
                0.0
            }
        })
        .collect()
}

/// Brute-force per-class tally:
/// (macro precision, macro recall, accuracy, per-class precision, per-class recall).
pub fn metrics_oracle(truth: &[usize], pred: &[usize], classes: usize) -> (f64, f64, f64, Vec<f64>, Vec<f64>) {
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0usize, 0.0, 0usize);
    for c in 0..classes {
        let mut tp = 0;
        let mut predicted = 0;
        let mut actual = 0;
        for (&t, &p) in truth.iter().zip(pred) {
            if t == c && p == c {
                tp += 1;
            }
            if p == c {
                predicted += 1;
            }
            if t == c {
                actual += 1;
            }
        }
        let pc = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let rc = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
        precision.push(pc);
        recall.push(rc);
        if actual + predicted > 0 {
            p_sum += pc;
            p_n += 1;
        }
        if actual > 0 {
            r_sum += rc;
            r_n += 1;
        }
    }
    let correct = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    (
        p_sum / p_n as f64,
        r_sum / r_n as f64,
        correct as f64 / truth.len() as f64,
        precision,
        recall,
    )
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Average linkage recomputed from all leaf pairs at every step. Returns
/// each merge as (sorted member labels, distance).
pub fn agglomerative_oracle(points: &[(String, Vec<f64>)]) -> Vec<(Vec<String>, f64)> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    let min_label = |c: &Vec<usize>| c.iter().map(|&i| points[i].0.clone()).min().unwrap();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, (String, String), usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut total = 0.0;
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        total += dist(&points[i].1, &points[j].1);
                    }
                }
                let d = total / (clusters[a].len() * clusters[b].len()) as f64;
                let (la, lb) = (min_label(&clusters[a]), min_label(&clusters[b]));
                let key = if la <= lb { (la, lb) } else { (lb, la) };
                if best
                    .as_ref()
                    .is_none_or(|(bd, bk, _, _)| d < *bd || (d == *bd && key < *bk))
                {
                    best = Some((d, key, a, b));
                }
            }
        }
        let (d, _, a, b) = best.unwrap();
        let mut merged = clusters[a].clone();
        merged.extend(clusters[b].iter().copied());
        let mut labels: Vec<String> = merged.iter().map(|&i| points[i].0.clone()).collect();
        labels.sort();
        out.push((labels, d));
        clusters.remove(b);
        clusters[a] = merged;
    }
    out
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vec<R: Rng>(rng: &mut R, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<(String, Vec<f64>)> {
    (0..n)
        .map(|i| (format!("p{i:02}"), random_vec(rng, dim, 1.0)))
        .collect()
}

use mdrr_core::nn::{
    attention_backward, attention_forward, bilstm_forward, check_gradients, lstm::bilstm_backward, lstm::bilstm_trace,
    AttentionParams, BiLstmAttentionModel, BiLstmParams, DenseParams, GradCheckReport, Parameters,
};
use mdrr_core::reduce::{init_autoencoder, AutoencoderConfig};

pub const FD_STEP: f64 = 1e-5;

pub fn randomize<P: Parameters, R: Rng>(p: &mut P, rng: &mut R, scale: f64) {
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    }
}

fn weighted_sum(w: &Matrix, y: &Matrix) -> f64 {
    w.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum()
}

pub fn dense_case<R: Rng>(rng: &mut R) -> GradCheckReport {
    let (i, o) = (rng.random_range(1..6), rng.random_range(1..6));
    let mut p = DenseParams::zeros(i, o);
    randomize(&mut p, rng, 1.0);
    let x = random_vec(rng, i, 1.0);
    let w = random_vec(rng, o, 1.0);
    let mut g = DenseParams::zeros(i, o);
    p.backward(&x, &w, &mut g);
    check_gradients(&p, &g, |q| mdrr_core::linalg::dot(&w, &q.forward(&x).unwrap()), FD_STEP)
}

pub fn lstm_case<R: Rng>(rng: &mut R) -> GradCheckReport {
    let (f, h, t) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..5));
    let mut p = BiLstmParams::zeros(f, h);
    randomize(&mut p, rng, 0.8);
    let xs = random_matrix(rng, t, f, 1.0);
    let w = random_matrix(rng, t, 2 * h, 1.0);
    let trace = bilstm_trace(&p, &xs).unwrap();
    let mut g = BiLstmParams::zeros(f, h);
    bilstm_backward(&p, &trace, &w, &mut g);
    check_gradients(&p, &g, |q| weighted_sum(&w, &bilstm_forward(q, &xs).unwrap()), FD_STEP)
}

pub fn attention_case<R: Rng>(rng: &mut R) -> GradCheckReport {
    let (width, t) = (rng.random_range(1..6), rng.random_range(1..6));
    let mut p = AttentionParams::zeros(width);
    randomize(&mut p, rng, 1.0);
    let hs = random_matrix(rng, t, width, 1.0);
    let w = random_vec(rng, width, 1.0);
    let out = attention_forward(&p, &hs).unwrap();
    let mut g = AttentionParams::zeros(width);
    attention_backward(&p, &hs, &out, &w, &mut g);
    check_gradients(
        &p,
        &g,
        |q| mdrr_core::linalg::dot(&w, &attention_forward(q, &hs).unwrap().context),
        FD_STEP,
    )
}

pub fn autoencoder_case<R: Rng>(rng: &mut R) -> GradCheckReport {
    let input_dim = rng.random_range(3..7);
    let reduced_dim = rng.random_range(1..input_dim);
    let hidden = if rng.random_bool(0.5) {
        vec![rng.random_range(1..5)]
    } else {
        vec![]
    };
    let cfg = AutoencoderConfig {
        input_dim,
        reduced_dim,
        hidden_sizes: hidden,
        ..Default::default()
    };
    let mut p = init_autoencoder(&cfg, rng.random()).unwrap();
    randomize(&mut p, rng, 0.8);
    let x = random_vec(rng, input_dim, 1.0);
    let (_, g) = p.loss_and_gradients(&x).unwrap();
    check_gradients(&p, &g, |q| q.reconstruction_loss(&x).unwrap(), FD_STEP)
}

pub fn classifier_case<R: Rng>(rng: &mut R) -> GradCheckReport {
    let (f, h, c, t) = (
        rng.random_range(1..4),
        rng.random_range(1..4),
        rng.random_range(2..4),
        rng.random_range(1..5),
    );
    let mut p = BiLstmAttentionModel::zeros(f, h, c);
    randomize(&mut p, rng, 0.8);
    let xs = random_matrix(rng, t, f, 1.0);
    let label = rng.random_range(0..c);
    let (_, g) = p.loss_and_gradients(&xs, label).unwrap();
    check_gradients(&p, &g, |q| q.loss(&xs, label).unwrap(), FD_STEP)
}

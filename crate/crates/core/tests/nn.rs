mod common;

use mdrr_core::linalg::Matrix;
use mdrr_core::nn::lstm::{bilstm_backward, bilstm_trace};
use mdrr_core::nn::{
    attention_backward, attention_forward, bilstm_forward, lstm_step, softmax_cross_entropy, AttentionParams,
    BiLstmAttentionModel, BiLstmParams, DenseParams, LstmCellParams, Parameters,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Scalar recurrence written out per unit.
fn lstm_oracle(p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pre = |g: &mdrr_core::nn::GateParams, k: usize| {
        let mut a = g.bias[k];
        for (j, xv) in x.iter().enumerate() {
            a += g.input.get(k, j) * xv;
        }
        for (j, hv) in h.iter().enumerate() {
            a += g.recurrent.get(k, j) * hv;
        }
        a
    };
    let mut h_new = Vec::new();
    let mut c_new = Vec::new();
    for k in 0..h.len() {
        let i = sig(pre(&p.input_gate, k));
        let f = sig(pre(&p.forget_gate, k));
        let o = sig(pre(&p.output_gate, k));
        let g = pre(&p.candidate, k).tanh();
        let ck = f * c[k] + i * g;
        c_new.push(ck);
        h_new.push(o * ck.tanh());
    }
    (h_new, c_new)
}

#[test]
fn lstm_step_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = LstmCellParams::zeros(3, 2);
    common::randomize(&mut p, &mut rng, 1.0);
    let x = common::random_vec(&mut rng, 3, 1.0);
    let h = common::random_vec(&mut rng, 2, 1.0);
    let c = common::random_vec(&mut rng, 2, 1.0);
    let (gh, gc) = lstm_step(&p, &x, &h, &c).unwrap();
    let (wh, wc) = lstm_oracle(&p, &x, &h, &c);
    for k in 0..2 {
        assert!((gh[k] - wh[k]).abs() < 1e-12 && (gc[k] - wc[k]).abs() < 1e-12);
    }
}

#[test]
fn palindrome_with_shared_weights_mirrors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut fwd = LstmCellParams::zeros(2, 3);
    common::randomize(&mut fwd, &mut rng, 1.0);
    let p = BiLstmParams {
        forward: fwd.clone(),
        backward: fwd,
    };
    let xs = Matrix::from_rows(&[
        vec![0.1, 0.2],
        vec![-0.5, 0.7],
        vec![0.9, -0.3],
        vec![-0.5, 0.7],
        vec![0.1, 0.2],
    ]);
    let out = bilstm_forward(&p, &xs).unwrap();
    let t = out.rows();
    for j in 0..t {
        let (a, b) = (out.row(j), out.row(t - 1 - j));
        for k in 0..3 {
            assert!((a[k] - b[3 + k]).abs() < 1e-12);
        }
    }
}

#[test]
fn last_input_reaches_only_backward_half_early() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut p = BiLstmParams::zeros(2, 2);
    common::randomize(&mut p, &mut rng, 1.0);
    let xs = common::random_matrix(&mut rng, 5, 2, 1.0);
    let mut ys = xs.clone();
    ys.set(4, 0, xs.get(4, 0) + 0.5);
    let (a, b) = (bilstm_forward(&p, &xs).unwrap(), bilstm_forward(&p, &ys).unwrap());
    for j in 0..5 {
        let fwd_same = a.row(j)[..2] == b.row(j)[..2];
        assert_eq!(fwd_same, j < 4, "forward half at step {j}");
        assert_ne!(a.row(j)[2..], b.row(j)[2..], "backward half at step {j}");
    }
}

#[test]
fn attention_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = AttentionParams {
        weight: common::random_vec(&mut rng, 4, 1.0),
        bias: vec![0.3],
    };
    let hs = common::random_matrix(&mut rng, 3, 4, 1.0);
    let out = attention_forward(&p, &hs).unwrap();
    let e: Vec<f64> = (0..3)
        .map(|j| (0..4).map(|k| p.weight[k] * hs.get(j, k)).sum::<f64>() + 0.3)
        .map(f64::tanh)
        .collect();
    let z: f64 = e.iter().map(|v| v.exp()).sum();
    for j in 0..3 {
        assert!((out.weights[j] - e[j].exp() / z).abs() < 1e-12);
    }
    for k in 0..4 {
        let c: f64 = (0..3).map(|j| e[j].exp() / z * hs.get(j, k)).sum();
        assert!((out.context[k] - c).abs() < 1e-12);
    }
}

#[test]
fn attention_weights_ignore_bias_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // identical scores up to tanh: with w = 0 every score equals tanh(b)
    let hs = common::random_matrix(&mut rng, 6, 3, 1.0);
    let a = attention_forward(
        &AttentionParams {
            weight: vec![0.0; 3],
            bias: vec![0.2],
        },
        &hs,
    )
    .unwrap();
    let b = attention_forward(
        &AttentionParams {
            weight: vec![0.0; 3],
            bias: vec![-1.7],
        },
        &hs,
    )
    .unwrap();
    for (x, y) in a.weights.iter().zip(&b.weights) {
        assert!((x - y).abs() < 1e-12);
    }
    let shifted: Vec<f64> = a.scores.iter().map(|s| s + 3.0).collect();
    let w = mdrr_core::nn::attention::attention_weights(&shifted);
    for (x, y) in a.weights.iter().zip(&w) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn spec_sized_classifier_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut m = BiLstmAttentionModel::zeros(2, 2, 2);
    common::randomize(&mut m, &mut rng, 0.8);
    let xs = common::random_matrix(&mut rng, 3, 2, 1.0);
    let (_, g) = m.loss_and_gradients(&xs, 1).unwrap();
    let r = mdrr_core::nn::check_gradients(&m, &g, |q| q.loss(&xs, 1).unwrap(), 1e-5);
    assert!(r.passes(1e-4), "{r:?}");
    assert_eq!(r.checked, m.param_count());
}

#[test]
fn saturated_model_has_tiny_gradient() {
    let mut m = BiLstmAttentionModel::zeros(2, 2, 2);
    m.head.bias = vec![40.0, -40.0];
    let xs = Matrix::from_rows(&[vec![0.3, -0.2], vec![0.1, 0.5]]);
    let (loss, g) = m.loss_and_gradients(&xs, 0).unwrap();
    assert!(loss < 1e-9);
    assert!(g.l2_norm() < 1e-6);
}

#[test]
fn duplicate_example_doubles_summed_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = BiLstmAttentionModel::init(&mut rng, 3, 4, 3);
    let xs = common::random_matrix(&mut rng, 4, 3, 1.0);
    let (_, g) = m.loss_and_gradients(&xs, 2).unwrap();
    let mut sum = BiLstmAttentionModel::zeros(3, 4, 3);
    sum.add_scaled(&g, 1.0);
    sum.add_scaled(&g, 1.0);
    for ((_, _, a), (_, _, b)) in sum.tensors().into_iter().zip(g.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(*x, 2.0 * y);
        }
    }
}

#[test]
fn gradient_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        for r in [
            common::dense_case(&mut rng),
            common::lstm_case(&mut rng),
            common::attention_case(&mut rng),
            common::classifier_case(&mut rng),
        ] {
            assert!(r.passes(1e-4), "{r:?}");
        }
    }
}

fn fd_input_check(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) {
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        probe[k] = x[k] + 1e-5;
        let plus = loss(&probe);
        probe[k] = x[k] - 1e-5;
        let minus = loss(&probe);
        probe[k] = x[k];
        let numeric = (plus - minus) / 2e-5;
        let err = mdrr_core::nn::relative_error(analytic[k], numeric);
        assert!(err <= 1e-4, "input {k}: analytic {} numeric {numeric}", analytic[k]);
    }
}

#[test]
fn input_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let mut d = DenseParams::zeros(4, 3);
        common::randomize(&mut d, &mut rng, 1.0);
        let x = common::random_vec(&mut rng, 4, 1.0);
        let w = common::random_vec(&mut rng, 3, 1.0);
        let dx = d.backward(&x, &w, &mut DenseParams::zeros(4, 3));
        fd_input_check(&x, &dx, |v| mdrr_core::linalg::dot(&w, &d.forward(v).unwrap()));

        let mut b = BiLstmParams::zeros(2, 3);
        common::randomize(&mut b, &mut rng, 0.8);
        let xs = common::random_matrix(&mut rng, 4, 2, 1.0);
        let wo = common::random_matrix(&mut rng, 4, 6, 1.0);
        let trace = bilstm_trace(&b, &xs).unwrap();
        let dxs = bilstm_backward(&b, &trace, &wo, &mut BiLstmParams::zeros(2, 3));
        fd_input_check(xs.as_slice(), dxs.as_slice(), |v| {
            let out = bilstm_forward(&b, &Matrix::from_vec(4, 2, v.to_vec())).unwrap();
            out.as_slice().iter().zip(wo.as_slice()).map(|(a, c)| a * c).sum()
        });

        let mut a = AttentionParams::zeros(4);
        common::randomize(&mut a, &mut rng, 1.0);
        let hs = common::random_matrix(&mut rng, 5, 4, 1.0);
        let wc = common::random_vec(&mut rng, 4, 1.0);
        let out = attention_forward(&a, &hs).unwrap();
        let dh = attention_backward(&a, &hs, &out, &wc, &mut AttentionParams::zeros(4));
        fd_input_check(hs.as_slice(), dh.as_slice(), |v| {
            let o = attention_forward(&a, &Matrix::from_vec(5, 4, v.to_vec())).unwrap();
            mdrr_core::linalg::dot(&wc, &o.context)
        });
    }
}

proptest! {
    #[test]
    fn loss_is_non_negative(logits in prop::collection::vec(-30.0f64..30.0, 2..8), pick in any::<prop::sample::Index>()) {
        let label = pick.index(logits.len());
        let (loss, probs) = softmax_cross_entropy(&logits, label).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((loss + probs[label].ln()).abs() < 1e-12 * (1.0 + loss));
    }

    #[test]
    fn model_probabilities_sum_to_one(seed in any::<u64>(), t in 1usize..6, classes in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = BiLstmAttentionModel::init(&mut rng, 3, 2, classes);
        let xs = common::random_matrix(&mut rng, t, 3, 2.0);
        let p = m.probabilities(&xs).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        if classes == 1 {
            prop_assert_eq!(p, vec![1.0]);
        }
    }

    #[test]
    fn attention_simplex(seed in any::<u64>(), t in 1usize..30, width in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = AttentionParams { weight: common::random_vec(&mut rng, width, 5.0), bias: vec![rng.random_range(-5.0..5.0)] };
        let out = attention_forward(&p, &common::random_matrix(&mut rng, t, width, 5.0)).unwrap();
        prop_assert!((out.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(out.weights.iter().all(|&a| a > 0.0));
    }
}

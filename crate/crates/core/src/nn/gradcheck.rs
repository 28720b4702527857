//! Central finite-difference gradient verification.

use crate::nn::Parameters;

/// Denominators below this are clamped so that near-zero gradients are
/// compared absolutely.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Name and element index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Compares `analytic` against `(L(w + h) − L(w − h)) / 2h` for every element
/// of every tensor in `params`.
pub fn check_gradients<P, F>(params: &P, analytic: &P, loss: F, step: f64) -> GradCheckReport
where
    P: Parameters + Clone,
    F: Fn(&P) -> f64,
{
    let names: Vec<String> = params.tensors().into_iter().map(|t| t.0).collect();
    let grads: Vec<Vec<f64>> = analytic.tensors().into_iter().map(|t| t.2.to_vec()).collect();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (ti, name) in names.iter().enumerate() {
        for k in 0..grads[ti].len() {
            let orig = probe.tensors()[ti].2[k];
            probe.tensors_mut()[ti][k] = orig + step;
            let plus = loss(&probe);
            probe.tensors_mut()[ti][k] = orig - step;
            let minus = loss(&probe);
            probe.tensors_mut()[ti][k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grads[ti][k], numeric);
            report.checked += 1;
            if err > report.max_relative_error || err.is_nan() {
                report.max_relative_error = err;
                report.worst = Some((name.clone(), k));
            }
        }
    }
    report
}

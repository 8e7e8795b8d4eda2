//! Central finite-difference verification of analytic gradients.

use super::params::{Gradients, ParamSet};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst: Option<(String, usize, f64, f64)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error < tol
    }
}

/// Compares `analytic` against `(L(θ+ε) − L(θ−ε)) / 2ε` for every scalar of `params`.
pub fn check<F>(params: &ParamSet, analytic: &Gradients, epsilon: f64, loss: F) -> GradCheckReport
where
    F: Fn(&ParamSet) -> f64,
{
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for id in params.ids() {
        for k in 0..params.get(id).len() {
            let orig = probe.get(id).data[k];
            probe.get_mut(id).data[k] = orig + epsilon;
            let up = loss(&probe);
            probe.get_mut(id).data[k] = orig - epsilon;
            let down = loss(&probe);
            probe.get_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            let a = analytic.get(id)[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            report.checked += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(rel);
                if rel >= report.max_relative_error {
                    report.worst = Some((params.name(id).to_string(), k, a, numeric));
                }
            }
        }
    }
    report
}

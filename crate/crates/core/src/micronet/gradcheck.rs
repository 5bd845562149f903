//! Central finite-difference verification of [`objective`](super::objective).
//!
//! The numeric side only evaluates the loss through forward passes, so it is
//! independent of the hand-written backward code it checks.

use super::{objective, objective_value, Batch, Model};
use crate::error::Result;

/// Gradients smaller than this are compared in absolute terms; it sits well
/// above the rounding noise of a double-precision central difference.
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub n_params: usize,
    pub max_rel_error: f64,
    pub worst_param: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a - n| / max(|a|, |n|, ABS_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Compares every analytic partial derivative with `(L(θ+h) - L(θ-h)) / 2h`.
pub fn check(model: &Model<f64>, batch: &Batch<'_, f64>, lambda: f64, step: f64) -> Result<GradCheck> {
    let (_, analytic, _) = objective(model, batch, lambda)?;
    let mut probe = model.clone();
    let mut report = GradCheck {
        n_params: model.n_params(),
        max_rel_error: 0.0,
        worst_param: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for i in 0..model.n_params() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let up = objective_value(&probe, batch, lambda)?.l_total;
        probe.params_mut()[i] = orig - step;
        let down = objective_value(&probe, batch, lambda)?.l_total;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || i == 0 {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst_param = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    Ok(report)
}

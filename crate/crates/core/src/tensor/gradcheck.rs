//! Central finite-difference gradient checking in `f64`.
//!
//! The numeric side only evaluates forward passes on constant tensors, so it
//! shares no code path with the recorded backward closures it validates.

use super::Tensor;

/// Default step for central differences.
pub const STEP: f64 = 1e-5;
/// Gradient magnitudes below this are treated as this value when normalizing.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, GRAD_FLOOR)` over inputs.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Checks `f` (which must return a scalar) at `inputs`.
pub fn check<F>(inputs: &[(Vec<usize>, Vec<f64>)], f: F) -> GradCheckReport
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    check_with_step(inputs, f, STEP)
}

pub fn check_with_step<F>(inputs: &[(Vec<usize>, Vec<f64>)], f: F, h: f64) -> GradCheckReport
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|(s, d)| Tensor::param(s, d.clone())).collect();
    let loss = f(&leaves);
    loss.backward().expect("scalar loss");
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let eval = |vals: &[Vec<f64>]| -> f64 {
        let ts: Vec<Tensor<f64>> = inputs
            .iter()
            .zip(vals)
            .map(|((s, _), d)| Tensor::constant(s, d.clone()))
            .collect();
        f(&ts).item()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    let mut vals: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    for (k, a) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; a.len()];
        for i in 0..a.len() {
            let x0 = vals[k][i];
            vals[k][i] = x0 + h;
            let fp = eval(&vals);
            vals[k][i] = x0 - h;
            let fm = eval(&vals);
            vals[k][i] = x0;
            numeric[i] = (fp - fm) / (2.0 * h);
        }
        let abs = a.iter().zip(&numeric).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = a
            .iter()
            .chain(&numeric)
            .map(|x| x.abs())
            .fold(GRAD_FLOOR, f64::max);
        report.max_abs_err = report.max_abs_err.max(abs);
        report.max_rel_err = report.max_rel_err.max(abs / scale);
    }
    report
}

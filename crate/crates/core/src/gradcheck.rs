//! Central finite-difference oracle for backward passes.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_STEP: f64 = 1e-6;
/// Magnitude below which entries are compared absolutely.
pub const ABS_FLOOR: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: (usize, usize),
    pub h: f64,
    pub passed: bool,
}

/// Entry `(m, n)` is `(f(Φ + h·E_mn) − f(Φ − h·E_mn)) / 2h`.
pub fn central_diff_grad<F>(f: F, phi: &Matrix, h: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> Result<f64> + Sync,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let (rows, cols) = phi.shape();
    let entries: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / cols, idx % cols);
            let mut x = phi.clone();
            let orig = x[(i, j)];
            x[(i, j)] = orig + h;
            let up = f(&x)?;
            x[(i, j)] = orig - h;
            let down = f(&x)?;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss is not finite when perturbing entry ({i}, {j})"
                )));
            }
            Ok((up - down) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    Matrix::from_vec(rows, cols, entries)
}

/// Entry-wise comparison. An entry passes when its absolute error is at
/// most `abs_tol` or its relative error `|a − n| / max(|a|, |n|)` is at
/// most `rel_tol`. The reported relative error uses a floor of `1e-8`.
pub fn compare(analytic: &Matrix, numeric: &Matrix, rel_tol: f64, abs_tol: f64) -> Result<GradReport> {
    compare_with_step(analytic, numeric, rel_tol, abs_tol, DEFAULT_STEP)
}

pub fn compare_with_step(
    analytic: &Matrix,
    numeric: &Matrix,
    rel_tol: f64,
    abs_tol: f64,
    h: f64,
) -> Result<GradReport> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::Dimension(format!(
            "gradient shapes differ: {:?} vs {:?}",
            analytic.shape(),
            numeric.shape()
        )));
    }
    let cols = analytic.cols();
    let mut report = GradReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst_index: (0, 0),
        h,
        passed: true,
    };
    for (idx, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let abs = (a - n).abs();
        let scale = a.abs().max(n.abs());
        let rel = abs / scale.max(ABS_FLOOR);
        if !(abs <= abs_tol || abs <= rel_tol * scale) {
            report.passed = false;
        }
        if rel > report.max_rel_err || rel.is_nan() {
            report.max_rel_err = rel;
            report.worst_index = (idx / cols, idx % cols);
        }
        report.max_abs_err = report.max_abs_err.max(abs);
    }
    Ok(report)
}

//! Jacobi eigendecomposition for symmetric matrices.

use rayon::prelude::*;

use super::{Matrix, SymMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const CONVERGENCE: f64 = 1e-12;
/// Dimension from which rotation blocks are applied on the thread pool.
const PARALLEL_DIM: usize = 128;

/// Eigenvalues in descending order with matching orthonormal eigenvector
/// columns. Each eigenvector has its largest-magnitude component positive.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenPair {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `U · diag(f(λ)) · Uᵀ`.
    pub fn compose(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.dim();
        let scaled = Matrix::from_fn(n, n, |i, j| self.vectors[(i, j)] * f(self.values[j]));
        scaled.matmul_t(&self.vectors)
    }

    pub fn reconstruct(&self) -> Matrix {
        self.compose(|x| x)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

fn off_and_on_norms(a: &Matrix) -> (f64, f64) {
    let n = a.rows();
    let (mut off, mut on) = (0.0, 0.0);
    for i in 0..n {
        for (j, &x) in a.row(i).iter().enumerate() {
            if i == j {
                on += x * x;
            } else {
                off += x * x;
            }
        }
    }
    (off.sqrt(), on.sqrt())
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Each sweep visits every pair `(p, q)` once, in round-robin order so that
/// the `⌊n/2⌋` rotations of one step are disjoint and can be applied as a
/// block of row rotations followed by a block of column rotations. Sweeps
/// stop one sweep after the off-diagonal Frobenius norm drops below `1e-12`
/// times the diagonal norm; more than 100 sweeps is reported as a numeric
/// failure.
pub fn sym_eig(s: &SymMatrix) -> Result<EigenPair> {
    if !s.is_finite() {
        return Err(Error::Numeric("eigendecomposition input has NaN/Inf entries".into()));
    }
    let n = s.dim();
    let mut a = s.as_matrix().clone();
    // Rows of `vt` are the eigenvectors, so rotations touch contiguous memory.
    let mut vt = Matrix::identity(n);
    let mut converged = n <= 1;
    let schedule = round_robin(n);
    let mut rotations: Vec<Rotation> = Vec::with_capacity(n / 2);

    for sweep in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let (off, on) = off_and_on_norms(&a);
        if off == 0.0 {
            converged = true;
            break;
        }
        // One more sweep after the threshold squares the residual away.
        converged = off < CONVERGENCE * on;
        for step in &schedule {
            rotations.clear();
            for &(p, q) in step {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let g = 100.0 * apq.abs();
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta.is_finite() {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                } else {
                    0.5 / theta
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                rotations.push(Rotation {
                    p,
                    q,
                    c,
                    s: t * c,
                    app: app - t * apq,
                    aqq: aqq + t * apq,
                });
            }
            if rotations.is_empty() {
                continue;
            }
            let parallel = n >= PARALLEL_DIM;
            rotate_row_pairs(&mut a, &rotations, parallel);
            rotate_row_pairs(&mut vt, &rotations, parallel);
            let rotate_cols = |row: &mut [f64]| {
                for r in &rotations {
                    let (g, h) = (row[r.p], row[r.q]);
                    row[r.p] = r.c * g - r.s * h;
                    row[r.q] = r.s * g + r.c * h;
                }
            };
            if parallel {
                a.data_mut().par_chunks_mut(n).for_each(rotate_cols);
            } else {
                a.data_mut().chunks_mut(n).for_each(rotate_cols);
            }
            for r in &rotations {
                a[(r.p, r.p)] = r.app;
                a[(r.q, r.q)] = r.aqq;
                a[(r.p, r.q)] = 0.0;
                a[(r.q, r.p)] = 0.0;
            }
        }
    }
    if !converged {
        let (off, on) = off_and_on_norms(&a);
        if !(off < CONVERGENCE * on || off == 0.0) {
            return Err(Error::Numeric(format!(
                "Jacobi did not converge in {MAX_SWEEPS} sweeps (off-diagonal norm {off:e})"
            )));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let v = vt.row(src);
        let pivot = v
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (k, x)| if x.abs() > best.1 { (k, x.abs()) } else { best })
            .0;
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (row, &x) in v.iter().enumerate() {
            vectors[(row, col)] = sign * x;
        }
    }
    Ok(EigenPair { values, vectors })
}

struct Rotation {
    p: usize,
    q: usize,
    c: f64,
    s: f64,
    app: f64,
    aqq: f64,
}

/// Round-robin pairing of `0..n`: `n − 1` steps (`n` when odd) of disjoint
/// pairs covering every pair exactly once.
fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let m = n + n % 2;
    let mut players: Vec<usize> = (0..m).collect();
    let mut steps = Vec::with_capacity(m - 1);
    for _ in 0..m - 1 {
        let step = (0..m / 2)
            .map(|k| (players[k], players[m - 1 - k]))
            .filter(|&(x, y)| x < n && y < n)
            .map(|(x, y)| (x.min(y), x.max(y)))
            .collect();
        steps.push(step);
        players[1..].rotate_right(1);
    }
    steps
}

/// Applies `[r_p; r_q] ← [c·r_p − s·r_q; s·r_p + c·r_q]` for each
/// rotation; the rotations must involve disjoint rows.
fn rotate_row_pairs(m: &mut Matrix, rotations: &[Rotation], parallel: bool) {
    let cols = m.cols();
    let mut rows: Vec<Option<&mut [f64]>> = m.data_mut().chunks_mut(cols).map(Some).collect();
    let pairs: Vec<(&Rotation, &mut [f64], &mut [f64])> = rotations
        .iter()
        .map(|r| {
            let rp = rows[r.p].take().expect("disjoint rotations");
            let rq = rows[r.q].take().expect("disjoint rotations");
            (r, rp, rq)
        })
        .collect();
    let apply = |(r, rp, rq): (&Rotation, &mut [f64], &mut [f64])| {
        for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
            let (g, h) = (*x, *y);
            *x = r.c * g - r.s * h;
            *y = r.s * g + r.c * h;
        }
    };
    if parallel {
        pairs.into_par_iter().for_each(apply);
    } else {
        pairs.into_iter().for_each(apply);
    }
}

/// Spectral matrix function `U · diag(ψ(λ)) · Uᵀ`.
///
/// Fails with a domain error when `ψ` is not finite at some eigenvalue.
pub fn mat_fun(s: &SymMatrix, psi: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    mat_fun_eig(&sym_eig(s)?, psi)
}

/// [`mat_fun`] on an existing decomposition.
pub fn mat_fun_eig(eig: &EigenPair, psi: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    let mapped: Vec<f64> = eig.values.iter().map(|&x| psi(x)).collect();
    if let Some(pos) = mapped.iter().position(|y| !y.is_finite()) {
        return Err(Error::Domain(format!(
            "matrix function undefined at eigenvalue {:e}",
            eig.values[pos]
        )));
    }
    let n = eig.dim();
    let scaled = Matrix::from_fn(n, n, |i, j| eig.vectors[(i, j)] * mapped[j]);
    Ok(SymMatrix::symmetrized(scaled.matmul_t(&eig.vectors)))
}

/// `Sⁿ` by repeated squaring.
pub fn mat_int_pow(s: &SymMatrix, n: u32) -> SymMatrix {
    let dim = s.dim();
    let mut result: Option<Matrix> = None;
    let mut base = s.as_matrix().clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => r.matmul(&base),
            });
        }
        e >>= 1;
        if e > 0 {
            base = base.matmul(&base);
        }
    }
    SymMatrix::symmetrized(result.unwrap_or_else(|| Matrix::identity(dim)))
}

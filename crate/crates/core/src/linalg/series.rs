//! Eigendecomposition-free matrix functions: Gauss–Jordan inverse,
//! scaling-and-squaring exponential, Denman–Beavers square root and an
//! inverse scaling-and-squaring logarithm. These back the closed matrix
//! forms of the spectral normalizations.

use super::{Matrix, SymMatrix};
use crate::error::{Error, Result};

/// Inverse by Gauss–Jordan elimination with partial pivoting.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::Dimension("inverse of a non-square matrix".into()));
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut inv = Matrix::identity(n);
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| work[(i, col)].abs().total_cmp(&work[(j, col)].abs()))
            .unwrap();
        let pv = work[(pivot, col)];
        if pv.abs() <= 1e-300 || pv.abs() < f64::EPSILON * scale * 1e-3 {
            return Err(Error::Numeric(format!("singular matrix (pivot {pv:e} in column {col})")));
        }
        if pivot != col {
            swap_rows(&mut work, pivot, col);
            swap_rows(&mut inv, pivot, col);
        }
        let r = 1.0 / pv;
        work.row_mut(col).iter_mut().for_each(|x| *x *= r);
        inv.row_mut(col).iter_mut().for_each(|x| *x *= r);
        let wrow = work.row(col).to_vec();
        let irow = inv.row(col).to_vec();
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = work[(i, col)];
            if f == 0.0 {
                continue;
            }
            for (x, y) in work.row_mut(i).iter_mut().zip(&wrow) {
                *x -= f * y;
            }
            for (x, y) in inv.row_mut(i).iter_mut().zip(&irow) {
                *x -= f * y;
            }
        }
    }
    Ok(inv)
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    let cols = m.cols();
    for j in 0..cols {
        m.data_mut().swap(a * cols + j, b * cols + j);
    }
}

/// Matrix exponential: Taylor series on `A / 2ˢ` with `‖A/2ˢ‖₁ ≤ ½`,
/// followed by `s` squarings.
pub fn expm(a: &SymMatrix) -> SymMatrix {
    let n = a.dim();
    let norm = a.norm_one();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let b = a.scale(0.5f64.powi(s));
    let mut term = Matrix::identity(n);
    let mut sum = Matrix::identity(n);
    for k in 1..=24 {
        term = term.matmul(&b).scale(1.0 / k as f64);
        sum = sum.add(&term);
        if term.max_abs() < 1e-18 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..s {
        sum = sum.matmul(&sum);
    }
    SymMatrix::symmetrized(sum)
}

/// Principal square root of a symmetric positive definite matrix by the
/// Denman–Beavers iteration `Y ← ½(Y + Z⁻¹)`, `Z ← ½(Z + Y⁻¹)`.
pub fn sqrtm_spd(a: &SymMatrix) -> Result<SymMatrix> {
    let n = a.dim();
    let mut y = a.as_matrix().clone();
    let mut z = Matrix::identity(n);
    for _ in 0..100 {
        let y_inv = inverse(&y)?;
        let z_inv = inverse(&z)?;
        let y_next = y.add(&z_inv).scale(0.5);
        let z_next = z.add(&y_inv).scale(0.5);
        let delta = y_next.sub(&y).frobenius();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.frobenius() {
            return Ok(SymMatrix::symmetrized(y));
        }
    }
    Err(Error::Numeric("Denman-Beavers square root did not converge".into()))
}

/// Principal logarithm of a symmetric positive definite matrix.
///
/// The input is first scaled by its mean eigenvalue, square-rooted until
/// it lies within `‖X − I‖₁ ≤ ¼`, then the series
/// `log X = 2 Σ_{odd j} Yʲ / j` with `Y = (X − I)(X + I)⁻¹` is summed.
pub fn logm_spd(a: &SymMatrix) -> Result<SymMatrix> {
    let n = a.dim();
    if n == 0 {
        return Ok(a.clone());
    }
    let mean = a.trace() / n as f64;
    if !(mean > 0.0) {
        return Err(Error::Domain("logarithm of a matrix with nonpositive trace".into()));
    }
    let mut x = a.scale(1.0 / mean);
    let mut doublings = 0;
    while x.add_identity(-1.0).norm_one() > 0.25 {
        x = sqrtm_spd(&x)?;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Numeric("logarithm: too many square roots".into()));
        }
    }
    let y = x.add_identity(-1.0).matmul(&inverse(&x.add_identity(1.0))?);
    let y2 = y.matmul(&y);
    let mut power = y.clone();
    let mut sum = y;
    for j in (3..200).step_by(2) {
        power = power.matmul(&y2);
        let term = power.scale(1.0 / j as f64);
        sum = sum.add(&term);
        if term.max_abs() < 1e-18 {
            break;
        }
    }
    let log_x = sum.scale(2.0 * 2f64.powi(doublings));
    Ok(SymMatrix::symmetrized(log_x.add_identity(mean.ln())))
}

/// Solves `A·x = b` for symmetric positive definite `A` by Cholesky
/// factorization. Fails when a pivot is not positive.
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if !a.is_square() || b.len() != n {
        return Err(Error::Dimension("cholesky_solve: shape mismatch".into()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::Numeric(format!("matrix not positive definite at pivot {j} ({diag:e})")));
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - super::dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / ljj;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - super::dot(&l.row(i)[..i], &y[..i])) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat_fun, rel_frobenius};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
        let a = Matrix::from_fn(n, n + 2, |_, _| rng.random_range(-1.0..1.0));
        SymMatrix::symmetrized(a.matmul_t(&a)).add_identity(0.05)
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_spd(6, &mut rng);
        let inv = inverse(&a).unwrap();
        assert!(inv.matmul(&a).sub(&Matrix::identity(6)).max_abs() < 1e-10);
    }

    #[test]
    fn cholesky_solve_matches_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spd(5, &mut rng);
        let b: Vec<f64> = (0..5).map(|i| i as f64 - 1.5).collect();
        let x = cholesky_solve(&a, &b).unwrap();
        let inv = inverse(&a).unwrap();
        for i in 0..5 {
            let expect: f64 = (0..5).map(|k| inv[(i, k)] * b[k]).sum();
            assert!((x[i] - expect).abs() < 1e-10);
        }
        assert!(cholesky_solve(&Matrix::diag(&[1.0, 0.0]), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn inverse_of_singular_fails() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(inverse(&a).is_err());
    }

    #[test]
    fn closed_forms_match_spectral() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [2usize, 5, 8] {
            let a = random_spd(n, &mut rng);
            let e1 = expm(&a.scale(-3.0));
            let e2 = mat_fun(&a, |x| (-3.0 * x).exp()).unwrap();
            assert!(rel_frobenius(&e1, &e2, 1e-300) < 1e-11);
            let r1 = sqrtm_spd(&a).unwrap();
            let r2 = mat_fun(&a, f64::sqrt).unwrap();
            assert!(rel_frobenius(&r1, &r2, 1e-300) < 1e-11);
            let l1 = logm_spd(&a).unwrap();
            let l2 = mat_fun(&a, f64::ln).unwrap();
            assert!(rel_frobenius(&l1, &l2, 1e-300) < 1e-11);
        }
    }
}

//! Seeded random instances for checks, benchmarks and the training demo.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernelmap::{feature_map, PivotGrid};
use crate::linalg::{sym_eig, Matrix, SymMatrix};

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Symmetric matrix with standard normal entries on and above the diagonal.
pub fn random_sym<R: Rng>(rng: &mut R, dim: usize) -> SymMatrix {
    let g = gaussian_matrix(rng, dim, dim);
    SymMatrix::new(Matrix::from_fn(dim, dim, |i, j| if i <= j { g[(i, j)] } else { g[(j, i)] }))
        .expect("constructed symmetric")
}

/// `A·Aᵀ/dim + floor·I` with Gaussian `A` of shape `dim × (dim + 2)`.
pub fn random_psd<R: Rng>(rng: &mut R, dim: usize, floor: f64) -> SymMatrix {
    let a = gaussian_matrix(rng, dim, dim + 2);
    SymMatrix::new(a.matmul_t(&a).scale(1.0 / dim as f64))
        .expect("Gram matrices are symmetric")
        .add_identity(floor)
}

/// Random orthogonal matrix (eigenvectors of a random symmetric matrix).
pub fn random_orthogonal<R: Rng>(rng: &mut R, dim: usize) -> Matrix {
    sym_eig(&random_sym(rng, dim)).expect("finite input").vectors
}

/// `α·[φ(x); φ(y)]` for uniformly random locations in `[0, 1]²`; a
/// `2Z × n` matrix.
pub fn random_codes<R: Rng>(rng: &mut R, n: usize, alpha: f64, grid: &PivotGrid) -> Matrix {
    let z = grid.len();
    let mut codes = Matrix::zeros(2 * z, n);
    for col in 0..n {
        let x: f64 = rng.random();
        let y: f64 = rng.random();
        for (r, v) in feature_map(x, grid).into_iter().chain(feature_map(y, grid)).enumerate() {
            codes[(r, col)] = alpha * v;
        }
    }
    codes
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_orthogonal(&mut rng, 6);
        assert!(q.transpose().matmul(&q).sub(&Matrix::identity(6)).max_abs() < 1e-13);
    }

    #[test]
    fn psd_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = random_psd(&mut rng, 5, 0.2);
        assert!(sym_eig(&m).unwrap().min_value() >= 0.2 - 1e-12);
    }
}

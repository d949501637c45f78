//! Co-occurrence aggregation: rectification, β-centering, spatial
//! augmentation and the averaged outer-product matrix.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};

/// Default trace guard for trace normalization.
pub const DEFAULT_LAMBDA: f64 = 1e-6;

/// Columns per block in the co-occurrence reduction.
const REDUCTION_BLOCK: usize = 64;

/// `d × N` feature columns with optional `(W, H)` grid metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBatch {
    phi: Matrix,
    grid: Option<(usize, usize)>,
}

impl FeatureBatch {
    pub fn new(phi: Matrix, grid: Option<(usize, usize)>) -> Result<Self> {
        if phi.cols() == 0 {
            return Err(Error::EmptyBatch);
        }
        if !phi.is_finite() {
            return Err(Error::Numeric("feature batch contains NaN/Inf".into()));
        }
        if let Some((w, h)) = grid {
            if w * h == 0 || phi.cols() % (w * h) != 0 {
                return Err(Error::Dimension(format!(
                    "{} columns are not a whole number of {w}x{h} maps",
                    phi.cols()
                )));
            }
        }
        Ok(FeatureBatch { phi, grid })
    }

    /// Concatenates per-patch batches column-wise. All patches must share
    /// feature dimension and grid.
    pub fn concat(patches: &[FeatureBatch]) -> Result<Self> {
        let first = patches.first().ok_or(Error::EmptyBatch)?;
        if patches.iter().any(|p| p.grid != first.grid) {
            return Err(Error::Dimension("patches have different grids".into()));
        }
        let blocks: Vec<Matrix> = patches.iter().map(|p| p.phi.clone()).collect();
        FeatureBatch::new(Matrix::hstack(&blocks)?, first.grid)
    }

    pub fn phi(&self) -> &Matrix {
        &self.phi
    }

    pub fn into_phi(self) -> Matrix {
        self.phi
    }

    pub fn grid(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.phi.rows()
    }

    pub fn len(&self) -> usize {
        self.phi.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.cols() == 0
    }
}

/// Feature rows stacked over spatial-code rows: column `n` is `[φ_n; c_n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedBatch {
    phi_bar: Matrix,
    d: usize,
}

impl AugmentedBatch {
    pub fn phi_bar(&self) -> &Matrix {
        &self.phi_bar
    }

    /// Feature dimension `d`.
    pub fn feature_dim(&self) -> usize {
        self.d
    }

    /// Spatial code length `Z'`.
    pub fn code_dim(&self) -> usize {
        self.phi_bar.rows() - self.d
    }

    pub fn total_dim(&self) -> usize {
        self.phi_bar.rows()
    }

    pub fn len(&self) -> usize {
        self.phi_bar.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_bar.cols() == 0
    }

    pub fn features(&self) -> Matrix {
        self.phi_bar.row_block(0, self.d)
    }

    pub fn codes(&self) -> Matrix {
        self.phi_bar.row_block(self.d, self.phi_bar.rows())
    }
}

/// Co-occurrence matrix together with its trace.
#[derive(Clone, Debug, PartialEq)]
pub struct CoocMatrix {
    m: SymMatrix,
    trace: f64,
}

impl CoocMatrix {
    /// Wraps an arbitrary symmetric matrix, e.g. for testing the pooling
    /// functions directly.
    pub fn from_sym(m: SymMatrix) -> Self {
        let trace = m.trace();
        CoocMatrix { m, trace }
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }
}

/// `φ_n ← max(0, φ_n)`, then `φ_n ← φ_n − β·μ` with `μ` the mean of the
/// rectified columns.
pub fn rectify_center(batch: &FeatureBatch, beta: f64) -> Result<FeatureBatch> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta must lie in [0, 1], got {beta}")));
    }
    let rect = batch.phi.map(|x| x.max(0.0));
    Ok(FeatureBatch {
        phi: center(&rect, beta),
        grid: batch.grid,
    })
}

/// Subtracts `β` times the row means.
pub(crate) fn center(phi: &Matrix, beta: f64) -> Matrix {
    if beta == 0.0 {
        return phi.clone();
    }
    let n = phi.cols() as f64;
    let mut out = phi.clone();
    for i in 0..phi.rows() {
        let mean = phi.row(i).iter().sum::<f64>() / n;
        out.row_mut(i).iter_mut().for_each(|x| *x -= beta * mean);
    }
    out
}

/// Stacks features over `Z' × N` spatial codes.
pub fn augment(batch: &FeatureBatch, codes: &Matrix) -> Result<AugmentedBatch> {
    if codes.cols() != batch.len() {
        return Err(Error::Dimension(format!(
            "{} code columns for {} feature columns",
            codes.cols(),
            batch.len()
        )));
    }
    Ok(AugmentedBatch {
        phi_bar: batch.phi.vstack(codes)?,
        d: batch.dim(),
    })
}

/// `M = (1/N)·Φ̄·Φ̄ᵀ`.
///
/// Columns are summed in fixed blocks of 64 and the block partials are
/// combined by a pairwise tree, so the result does not depend on how many
/// threads evaluate the blocks.
pub fn cooc_matrix(aug: &AugmentedBatch) -> Result<CoocMatrix> {
    let n = aug.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let dim = aug.total_dim();
    // Column-major copy so each column is contiguous.
    let cols: Vec<Vec<f64>> = (0..n).map(|j| aug.phi_bar.column(j)).collect();
    let blocks: Vec<Vec<f64>> = cols
        .par_chunks(REDUCTION_BLOCK)
        .map(|chunk| {
            let mut acc = vec![0.0; dim * dim];
            for v in chunk {
                for i in 0..dim {
                    let vi = v[i];
                    if vi == 0.0 {
                        continue;
                    }
                    let row = &mut acc[i * dim + i..(i + 1) * dim];
                    for (a, &vj) in row.iter_mut().zip(&v[i..]) {
                        *a += vi * vj;
                    }
                }
            }
            acc
        })
        .collect();
    let total = tree_sum(blocks);
    let inv_n = 1.0 / n as f64;
    let mut m = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let v = total[i * dim + j] * inv_n;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let m = SymMatrix::new(m)?;
    Ok(CoocMatrix::from_sym(m))
}

fn tree_sum(mut parts: Vec<Vec<f64>>) -> Vec<f64> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        parts = next;
    }
    parts.pop().unwrap_or_default()
}

/// `M / (trace(M) + λ)`.
pub fn trace_normalize(m: &CoocMatrix, lambda: f64) -> Result<SymMatrix> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    Ok(m.m.scale(1.0 / (m.trace + lambda)))
}

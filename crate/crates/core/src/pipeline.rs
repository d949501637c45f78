//! End-to-end pooling of raw feature maps: rectify and center, append
//! spatial codes, aggregate, normalize. Also the `pool` command.

use std::time::Instant;

use serde::Serialize;

use crate::aggregate::{augment, cooc_matrix, rectify_center, AugmentedBatch, CoocMatrix, FeatureBatch};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::kernelmap::encode_grid;
use crate::linalg::{sym_eig, Matrix, SymMatrix};
use crate::pn::{pn_bwd, pn_forward, rectify_bwd, PoolKind};
use crate::spectral::{spectral_fwd, spectral_pool, SpectralKind, SpectralPlan};
use crate::tensorfile::{DType, TensorFile};

/// Spectral counterpart of an element-wise kind. Both SigmE kinds map to
/// the (trace-normalized) spectral SigmE.
pub fn spectral_kind_for(kind: PoolKind) -> Result<SpectralKind> {
    match kind {
        PoolKind::Gamma => Ok(SpectralKind::Gamma),
        PoolKind::MaxExp => Ok(SpectralKind::MaxExp),
        PoolKind::SigmE | PoolKind::SigmETrace => Ok(SpectralKind::SigmE),
        PoolKind::AsinhE => Ok(SpectralKind::AsinhE),
        PoolKind::Average => Err(Error::Config("average pooling has no spectral form".into())),
    }
}

fn spectral_plan(cfg: &RunConfig) -> Result<Option<SpectralPlan>> {
    let Some(path) = cfg.spectral else {
        return Ok(None);
    };
    if cfg.pn.trace_comp || cfg.pn.residual {
        return Err(Error::Config(
            "trace compensation and residual variants apply to element-wise pooling only".into(),
        ));
    }
    SpectralPlan::new(spectral_kind_for(cfg.pn.kind)?, path, cfg.pn).map(Some)
}

/// `Z' × n` spatial codes for `n` columns on a `(W, H)` grid.
pub fn spatial_codes(n: usize, grid: (usize, usize), cfg: &RunConfig) -> Result<Matrix> {
    match cfg.pivot_grid()? {
        None => Ok(Matrix::zeros(0, n)),
        Some(pivots) => encode_grid(n, grid.0, grid.1, cfg.alpha, &pivots),
    }
}

/// Intermediate results of one forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Pooled {
    pub raw: Matrix,
    pub aug: AugmentedBatch,
    pub m: CoocMatrix,
    pub psi: SymMatrix,
}

pub fn pool_forward(raw: &Matrix, grid: (usize, usize), cfg: &RunConfig) -> Result<Pooled> {
    cfg.validate()?;
    let plan = spectral_plan(cfg)?;
    let batch = FeatureBatch::new(raw.clone(), Some(grid))?;
    let rect = rectify_center(&batch, cfg.pn.beta)?;
    let codes = spatial_codes(raw.cols(), grid, cfg)?;
    let aug = augment(&rect, &codes)?;
    let m = cooc_matrix(&aug)?;
    let psi = match plan {
        Some(plan) => spectral_fwd(&m, &plan)?,
        None => pn_forward(&m, &cfg.pn)?,
    };
    Ok(Pooled {
        raw: raw.clone(),
        aug,
        m,
        psi,
    })
}

/// `dℓ/dΦ_raw` given `dℓ/dΨ`, through pooling, centering and rectification.
pub fn pool_backward(pooled: &Pooled, upstream: &SymMatrix, cfg: &RunConfig) -> Result<Matrix> {
    let grad = match spectral_plan(cfg)? {
        Some(plan) => spectral_pool(&pooled.m, &pooled.aug, upstream, &plan)?,
        None => pn_bwd(&pooled.m, &pooled.aug, upstream, &cfg.pn)?,
    };
    Ok(rectify_bwd(&grad.d_phi, &pooled.raw))
}

#[derive(Clone, Debug, Serialize)]
pub struct PoolSummary {
    pub command: &'static str,
    pub kind: PoolKind,
    pub path: String,
    pub feature_dim: usize,
    pub code_dim: usize,
    pub columns: usize,
    /// Trace of the co-occurrence matrix `M`.
    pub cooc_trace: f64,
    /// Trace and extreme eigenvalues of the pooled output `Ψ`.
    pub trace: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub aggregate_ns: u128,
    pub pool_ns: u128,
    pub output: Option<String>,
}

/// Reads a rank-3 `d × H × W` tensor (or rank 2 with `cfg.grid`), pools it
/// and writes `Ψ` as an f64 tensor if an output path is configured.
pub fn cmd_pool(cfg: &RunConfig) -> Result<(SymMatrix, PoolSummary)> {
    cfg.validate()?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("pool needs an input tensor file".into()))?;
    let tensor = TensorFile::read(input)?;
    let grid = match (tensor.dims(), cfg.grid) {
        ([_, h, w], None) => (*w, *h),
        ([_, h, w], Some(g)) if g == (*w, *h) => g,
        ([_, h, w], Some((gw, gh))) => {
            return Err(Error::Validation(format!(
                "--grid {gw} {gh} contradicts the {w}x{h} map in the input file"
            )))
        }
        ([_, _], Some(g)) => g,
        ([_, _], None) => return Err(Error::Validation("rank-2 input needs --grid W H".into())),
        _ => unreachable!("rank checked on read"),
    };
    let raw = tensor.to_matrix();
    let plan = spectral_plan(cfg)?;

    let start = Instant::now();
    let batch = FeatureBatch::new(raw.clone(), Some(grid))?;
    let rect = rectify_center(&batch, cfg.pn.beta)?;
    let aug = augment(&rect, &spatial_codes(raw.cols(), grid, cfg)?)?;
    let m = cooc_matrix(&aug)?;
    let aggregate_ns = start.elapsed().as_nanos();

    let start = Instant::now();
    let psi = match &plan {
        Some(plan) => spectral_fwd(&m, plan)?,
        None => pn_forward(&m, &cfg.pn)?,
    };
    let pool_ns = start.elapsed().as_nanos();

    let eig = sym_eig(&psi)?;
    if let Some(out) = &cfg.output {
        TensorFile::from_matrix(&psi, DType::F64).write(out)?;
    }
    let summary = PoolSummary {
        command: "pool",
        kind: cfg.pn.kind,
        path: plan.map_or_else(|| "elementwise".to_string(), |p| p.path.to_string()),
        feature_dim: raw.rows(),
        code_dim: aug.code_dim(),
        columns: raw.cols(),
        cooc_trace: m.trace(),
        trace: psi.trace(),
        min_eigenvalue: eig.min_value(),
        max_eigenvalue: eig.max_value(),
        aggregate_ns,
        pool_ns,
        output: cfg.output.as_ref().map(|p| p.display().to_string()),
    };
    Ok((psi, summary))
}

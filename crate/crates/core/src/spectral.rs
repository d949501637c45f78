//! Spectral power normalizations: the pooling function acts on the
//! eigenvalues of `M` instead of its entries.
//!
//! Forward passes exist in two forms, eigenvalue substitution and closed
//! matrix expressions built from matrix products, inverses, square roots,
//! exponentials and logarithms. Backward passes use the divided-difference
//! (Löwner) rule on the eigendecomposition, with closed alternatives for
//! the matrix square root (a Sylvester equation) and for MaxExp with an
//! integer exponent (a sum of matrix-power products).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::{AugmentedBatch, CoocMatrix};
use crate::error::{Error, Result};
use crate::linalg::{
    cholesky_solve, expm, inverse, logm_spd, mat_int_pow, sqrtm_spd, sym_eig, EigenPair, Matrix, SymMatrix,
};
use crate::pn::{centering_bwd, dm_dphi_contract, PNConfig, PoolGradient};

/// Largest dimension for which the Kronecker system of the square-root
/// backward pass is materialized.
pub const KRONECKER_MAX_DIM: usize = 32;

/// Relative gap below which two eigenvalues are treated as equal in the
/// divided-difference matrix.
pub const DEGENERATE_GAP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralKind {
    Gamma,
    MaxExp,
    AsinhE,
    SigmE,
}

impl SpectralKind {
    pub const ALL: [SpectralKind; 4] = [
        SpectralKind::Gamma,
        SpectralKind::MaxExp,
        SpectralKind::AsinhE,
        SpectralKind::SigmE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SpectralKind::Gamma => "gamma",
            SpectralKind::MaxExp => "maxexp",
            SpectralKind::AsinhE => "asinhe",
            SpectralKind::SigmE => "sigme",
        }
    }

    /// MaxExp and SigmE act on `M / (trace(M) + λ)`.
    pub fn is_trace_normalized(self) -> bool {
        matches!(self, SpectralKind::MaxExp | SpectralKind::SigmE)
    }
}

impl fmt::Display for SpectralKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SpectralKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "sigme-trace" => return Ok(SpectralKind::SigmE),
            _ => {}
        }
        SpectralKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| Error::Config(format!("'{s}' has no spectral form (use gamma, maxexp, asinhe or sigme)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralPath {
    Eigen,
    ClosedForm,
}

impl fmt::Display for SpectralPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectralPath::Eigen => "eigen",
            SpectralPath::ClosedForm => "closed-form",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPlan {
    pub kind: SpectralKind,
    pub path: SpectralPath,
    pub params: PNConfig,
}

impl SpectralPlan {
    pub fn new(kind: SpectralKind, path: SpectralPath, params: PNConfig) -> Result<Self> {
        let plan = SpectralPlan { kind, path, params };
        plan.validate()?;
        Ok(plan)
    }

    pub fn eigen(kind: SpectralKind, params: PNConfig) -> Result<Self> {
        SpectralPlan::new(kind, SpectralPath::Eigen, params)
    }

    pub fn closed(kind: SpectralKind, params: PNConfig) -> Result<Self> {
        SpectralPlan::new(kind, SpectralPath::ClosedForm, params)
    }

    pub fn validate(&self) -> Result<()> {
        // The element-wise β restriction does not apply here; spectral
        // functions are validated on the spectrum instead.
        let mut p = self.params;
        p.kind = crate::pn::PoolKind::SigmE;
        p.validate()?;
        if self.path == SpectralPath::ClosedForm && self.kind == SpectralKind::MaxExp && integer_eta(p.eta).is_none() {
            return Err(Error::Plan(format!(
                "closed-form MaxExp needs an integer eta, got {}; use the eigen path",
                p.eta
            )));
        }
        Ok(())
    }

    /// Whether the closed path also has a closed backward pass.
    pub fn has_closed_backward(&self) -> bool {
        match self.kind {
            SpectralKind::MaxExp => integer_eta(self.params.eta).is_some(),
            SpectralKind::Gamma => self.params.gamma == 0.5,
            _ => false,
        }
    }
}

fn integer_eta(eta: f64) -> Option<u32> {
    (eta >= 1.0 && eta.fract() == 0.0 && eta <= u32::MAX as f64).then_some(eta as u32)
}

/// A scalar pooling function and its derivative, acting on (possibly
/// trace-normalized) eigenvalues.
#[derive(Clone, Copy, Debug)]
pub struct ScalarFn {
    kind: SpectralKind,
    params: PNConfig,
}

impl ScalarFn {
    pub fn new(kind: SpectralKind, params: PNConfig) -> Self {
        ScalarFn { kind, params }
    }

    pub fn value(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            SpectralKind::Gamma => x.powf(p.gamma),
            SpectralKind::MaxExp => 1.0 - (1.0 - x).max(0.0).powf(p.eta),
            SpectralKind::AsinhE => (p.gamma_prime * x).asinh(),
            SpectralKind::SigmE => (0.5 * p.eta_prime * x).tanh(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            SpectralKind::Gamma => p.gamma * x.powf(p.gamma - 1.0),
            SpectralKind::MaxExp => p.eta * (1.0 - x).max(0.0).powf(p.eta - 1.0),
            SpectralKind::AsinhE => p.gamma_prime / (p.gamma_prime * p.gamma_prime * x * x + 1.0).sqrt(),
            SpectralKind::SigmE => {
                let t = (0.5 * p.eta_prime * x).tanh();
                0.5 * p.eta_prime * (1.0 - t * t)
            }
        }
    }
}

fn normalizer(m: &CoocMatrix, kind: SpectralKind, lambda: f64) -> Result<f64> {
    if !kind.is_trace_normalized() {
        return Ok(1.0);
    }
    let s = m.trace() + lambda;
    if !(s > 0.0) {
        return Err(Error::Numeric(format!("trace normalizer {s:e} is not positive")));
    }
    Ok(s)
}

/// Eigendecomposition of `M` with Gamma's PSD requirement enforced:
/// eigenvalues within `−1e-9·scale` of zero are clamped, anything more
/// negative is a domain error.
fn checked_eig(m: &CoocMatrix, kind: SpectralKind) -> Result<EigenPair> {
    let mut eig = sym_eig(m.matrix())?;
    if kind == SpectralKind::Gamma {
        let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(m.trace().abs());
        let tol = 1e-9 * scale;
        for v in eig.values.iter_mut() {
            if *v < -tol {
                return Err(Error::Domain(format!(
                    "spectral Gamma needs a positive semidefinite matrix (eigenvalue {v:e})"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    Ok(eig)
}

/// Spectral pooling `U·diag(ψ(λ))·Uᵀ` (eigen path) or the equivalent closed
/// matrix expression (closed path).
pub fn spectral_fwd(m: &CoocMatrix, plan: &SpectralPlan) -> Result<SymMatrix> {
    plan.validate()?;
    match plan.path {
        SpectralPath::Eigen => spectral_fwd_eigen(m, plan),
        SpectralPath::ClosedForm => spectral_fwd_closed(m, plan),
    }
}

fn spectral_fwd_eigen(m: &CoocMatrix, plan: &SpectralPlan) -> Result<SymMatrix> {
    let s = normalizer(m, plan.kind, plan.params.lambda)?;
    let eig = checked_eig(m, plan.kind)?;
    let f = ScalarFn::new(plan.kind, plan.params);
    crate::linalg::mat_fun_eig(&eig, |x| f.value(x / s))
}

fn spectral_fwd_closed(m: &CoocMatrix, plan: &SpectralPlan) -> Result<SymMatrix> {
    let p = &plan.params;
    let mm = m.matrix();
    let n = mm.dim();
    match plan.kind {
        SpectralKind::Gamma => {
            if p.gamma == 1.0 {
                Ok(mm.clone())
            } else if p.gamma == 0.5 {
                sqrtm_spd(mm)
            } else {
                Ok(expm(&logm_spd(mm)?.scale(p.gamma)))
            }
        }
        SpectralKind::MaxExp => {
            let eta = integer_eta(p.eta).expect("validated");
            let s = normalizer(m, plan.kind, p.lambda)?;
            let a = SymMatrix::identity(n).sub(&mm.scale(1.0 / s));
            Ok(SymMatrix::identity(n).sub(&mat_int_pow(&a, eta)))
        }
        SpectralKind::AsinhE => {
            let gp = p.gamma_prime;
            let sq = SymMatrix::symmetrized(mm.matmul(mm)).scale(gp * gp).add_identity(1.0);
            logm_spd(&mm.scale(gp).add(&sqrtm_spd(&sq)?))
        }
        SpectralKind::SigmE => {
            let s = normalizer(m, plan.kind, p.lambda)?;
            let e = expm(&mm.scale(-p.eta_prime / s)).add_identity(1.0);
            let inv = inverse(&e)?;
            Ok(SymMatrix::symmetrized(inv.scale(2.0)).add_identity(-1.0))
        }
    }
}

/// Divided-difference matrix `K_ij = (ψ(λ_i) − ψ(λ_j)) / (λ_i − λ_j)`,
/// `K_ii = ψ'(λ_i)`; near-equal pairs use `ψ'` at their midpoint.
pub fn loewner_matrix(values: &[f64], psi: impl Fn(f64) -> f64, dpsi: impl Fn(f64) -> f64) -> Matrix {
    let n = values.len();
    let mapped: Vec<f64> = values.iter().map(|&x| psi(x)).collect();
    Matrix::from_fn(n, n, |i, j| {
        let (a, b) = (values[i], values[j]);
        if i == j {
            dpsi(a)
        } else if (a - b).abs() < DEGENERATE_GAP * a.abs().max(b.abs()).max(1.0) {
            dpsi(0.5 * (a + b))
        } else {
            (mapped[i] - mapped[j]) / (a - b)
        }
    })
}

fn loewner_bwd(eig: &EigenPair, upstream: &SymMatrix, psi: impl Fn(f64) -> f64, dpsi: impl Fn(f64) -> f64) -> Result<SymMatrix> {
    let k = loewner_matrix(&eig.values, psi, dpsi);
    if !k.is_finite() {
        return Err(Error::Numeric(
            "spectral derivative is not finite on this spectrum (zero eigenvalue?)".into(),
        ));
    }
    let u = &eig.vectors;
    let inner = u.transpose().matmul(upstream).matmul(u);
    Ok(SymMatrix::symmetrized(u.matmul(&k.hadamard(&inner)).matmul_t(u)))
}

/// `dℓ/dM = U·(K ⊙ (Uᵀ·sym(upstream)·U))·Uᵀ` for `Ψ = ψ(M)`.
pub fn spectral_bwd_eigen(
    m: &SymMatrix,
    upstream: &SymMatrix,
    psi: impl Fn(f64) -> f64,
    dpsi: impl Fn(f64) -> f64,
) -> Result<SymMatrix> {
    check_dims(m, upstream)?;
    loewner_bwd(&sym_eig(m)?, upstream, psi, dpsi)
}

fn check_dims(m: &SymMatrix, upstream: &SymMatrix) -> Result<()> {
    if m.dim() != upstream.dim() {
        return Err(Error::Dimension(format!(
            "upstream has dimension {} but M has dimension {}",
            upstream.dim(),
            m.dim()
        )));
    }
    Ok(())
}

/// Backward pass of `Ψ = M^{1/2}`: solves `M^{1/2}·X + X·M^{1/2} = upstream`.
///
/// Up to dimension 32 the Kronecker-sum system
/// `(I ⊗ M^{1/2} + M^{1/2} ⊗ I)·vec(X) = vec(upstream)` is formed and solved
/// directly; above that the solve is done in the eigenbasis.
pub fn sqrt_bwd_sylvester(m: &SymMatrix, upstream: &SymMatrix) -> Result<SymMatrix> {
    check_dims(m, upstream)?;
    let eig = sym_eig(m)?;
    let smallest = eig.min_value();
    if !(smallest > 1e-12 * eig.max_value().abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient { smallest });
    }
    let n = m.dim();
    if n > KRONECKER_MAX_DIM {
        let roots: Vec<f64> = eig.values.iter().map(|v| v.sqrt()).collect();
        let u = &eig.vectors;
        let inner = u.transpose().matmul(upstream).matmul(u);
        let scaled = Matrix::from_fn(n, n, |i, j| inner[(i, j)] / (roots[i] + roots[j]));
        return Ok(SymMatrix::symmetrized(u.matmul(&scaled).matmul_t(u)));
    }
    let root = sqrtm_spd(m)?;
    let nn = n * n;
    // Row-major vec: (S ⊗ I + I ⊗ S)·vec(X) = vec(S·X + X·S) for symmetric S.
    let mut kron = Matrix::zeros(nn, nn);
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            for k in 0..n {
                kron[(row, k * n + j)] += root[(i, k)];
                kron[(row, i * n + k)] += root[(k, j)];
            }
        }
    }
    let x = cholesky_solve(&kron, upstream.data()).map_err(|_| Error::RankDeficient { smallest })?;
    Ok(SymMatrix::symmetrized(Matrix::from_vec(n, n, x)?))
}

/// Closed-form backward pass of spectral MaxExp with integer `η`:
/// with `A = I − M/s` and `S = Σ_{n<η} Aⁿ·upstream·A^{η−1−n}`,
/// `dℓ/dM = S/s − ⟨S, M⟩/s²·I` where `s = trace(M) + λ`.
pub fn maxexp_spectral_bwd_closed(m: &CoocMatrix, upstream: &SymMatrix, eta: u32, lambda: f64) -> Result<SymMatrix> {
    check_dims(m.matrix(), upstream)?;
    if eta == 0 {
        return Err(Error::Plan("MaxExp exponent must be at least 1".into()));
    }
    let s = m.trace() + lambda;
    if !(s > 0.0) {
        return Err(Error::Numeric(format!("trace normalizer {s:e} is not positive")));
    }
    let n = m.dim();
    let a = Matrix::identity(n).sub(&m.matrix().scale(1.0 / s));
    let mut powers = vec![Matrix::identity(n)];
    for k in 1..eta as usize {
        let next = powers[k - 1].matmul(&a);
        powers.push(next);
    }
    let mut acc = Matrix::zeros(n, n);
    for k in 0..eta as usize {
        acc = acc.add(&powers[k].matmul(upstream).matmul(&powers[eta as usize - 1 - k]));
    }
    let coupling = acc.inner(m.matrix()) / (s * s);
    Ok(SymMatrix::symmetrized(acc.scale(1.0 / s).add_identity(-coupling)))
}

/// Chain rule through `N = M / s` with `s = trace(M) + λ`:
/// `dℓ/dM = G_N/s − ⟨G_N, M⟩/s²·I`.
fn through_trace_normalization(g_n: &SymMatrix, m: &SymMatrix, s: f64) -> SymMatrix {
    let coupling = g_n.inner(m) / (s * s);
    g_n.scale(1.0 / s).add_identity(-coupling)
}

/// `dℓ/dM` for a spectral plan. The closed path uses the Sylvester solve for
/// Gamma with `γ = ½` and the matrix-power sum for MaxExp; the remaining
/// kinds have no closed backward and fail with a plan error.
pub fn spectral_grad_m(m: &CoocMatrix, upstream: &SymMatrix, plan: &SpectralPlan) -> Result<SymMatrix> {
    plan.validate()?;
    check_dims(m.matrix(), upstream)?;
    let p = plan.params;
    match plan.path {
        SpectralPath::ClosedForm => match plan.kind {
            SpectralKind::Gamma if p.gamma == 0.5 => sqrt_bwd_sylvester(m.matrix(), upstream),
            SpectralKind::MaxExp => {
                maxexp_spectral_bwd_closed(m, upstream, integer_eta(p.eta).expect("validated"), p.lambda)
            }
            kind => Err(Error::Plan(format!(
                "spectral {kind} (gamma = {}) has no closed-form backward; use the eigen path",
                p.gamma
            ))),
        },
        SpectralPath::Eigen => {
            let s = normalizer(m, plan.kind, p.lambda)?;
            let eig = checked_eig(m, plan.kind)?;
            let f = ScalarFn::new(plan.kind, p);
            let scaled = EigenPair {
                values: eig.values.iter().map(|v| v / s).collect(),
                vectors: eig.vectors,
            };
            let g_n = loewner_bwd(&scaled, upstream, |x| f.value(x), |x| f.derivative(x))?;
            if plan.kind.is_trace_normalized() {
                Ok(through_trace_normalization(&g_n, m.matrix(), s))
            } else {
                Ok(g_n)
            }
        }
    }
}

/// Spectral pooling backward pass down to the (rectified) features.
pub fn spectral_pool(m: &CoocMatrix, aug: &AugmentedBatch, upstream: &SymMatrix, plan: &SpectralPlan) -> Result<PoolGradient> {
    let g = spectral_grad_m(m, upstream, plan)?;
    let d_phi = centering_bwd(&dm_dphi_contract(&g, aug)?, plan.params.beta);
    Ok(PoolGradient {
        upstream: upstream.clone(),
        d_phi,
    })
}

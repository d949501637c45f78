//! Element-wise power normalizations of a co-occurrence matrix and their
//! analytic backward passes down to the feature columns.
//!
//! Every backward pass follows one pattern: compute `dℓ/dM` from the
//! upstream gradient `dℓ/dΨ`, then contract it against `∂M/∂Φ` with
//! [`dm_dphi_contract`]. For the trace-normalized kinds the normalizer
//! `trace(M) + λ` is itself a function of `M`, which contributes a
//! multiple of the identity to `dℓ/dM`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aggregate::{AugmentedBatch, CoocMatrix};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolKind {
    Average,
    Gamma,
    MaxExp,
    SigmE,
    SigmETrace,
    AsinhE,
}

impl PoolKind {
    pub const ALL: [PoolKind; 6] = [
        PoolKind::Average,
        PoolKind::Gamma,
        PoolKind::MaxExp,
        PoolKind::SigmE,
        PoolKind::SigmETrace,
        PoolKind::AsinhE,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PoolKind::Average => "average",
            PoolKind::Gamma => "gamma",
            PoolKind::MaxExp => "maxexp",
            PoolKind::SigmE => "sigme",
            PoolKind::SigmETrace => "sigme-trace",
            PoolKind::AsinhE => "asinhe",
        }
    }

    /// Kinds that break down on negative co-occurrences and therefore
    /// require `β = 0`.
    pub fn requires_nonnegative(self) -> bool {
        matches!(self, PoolKind::Gamma | PoolKind::MaxExp)
    }

    pub fn is_trace_normalized(self) -> bool {
        matches!(self, PoolKind::MaxExp | PoolKind::SigmETrace)
    }
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        PoolKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .or(match lower.as_str() {
                "sigmetrace" | "sigme_trace" => Some(PoolKind::SigmETrace),
                "avg" => Some(PoolKind::Average),
                _ => None,
            })
            .ok_or_else(|| Error::Config(format!("unknown pooling kind '{s}'")))
    }
}

/// Pooling hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PNConfig {
    pub kind: PoolKind,
    /// Gamma exponent, `0 < γ ≤ 1`.
    pub gamma: f64,
    /// MaxExp exponent, `η ≥ 1`.
    pub eta: f64,
    /// AsinhE slope `γ' > 0`.
    pub gamma_prime: f64,
    /// SigmE slope `η' ≥ 1`.
    pub eta_prime: f64,
    pub lambda: f64,
    /// Centering strength in `[0, 1]`.
    pub beta: f64,
    /// Residual weight.
    pub kappa: f64,
    /// Multiply the output by `(trace(M) + λ)^trace_comp_exponent`.
    pub trace_comp: bool,
    pub trace_comp_exponent: f64,
    /// Add `κ·M` to the output.
    pub residual: bool,
}

impl Default for PNConfig {
    fn default() -> Self {
        PNConfig {
            kind: PoolKind::SigmE,
            gamma: 0.5,
            eta: 20.0,
            gamma_prime: 10.0,
            eta_prime: 20.0,
            lambda: crate::aggregate::DEFAULT_LAMBDA,
            beta: 0.0,
            kappa: 1e-3,
            trace_comp: false,
            trace_comp_exponent: 0.5,
            residual: false,
        }
    }
}

impl PNConfig {
    pub fn with_kind(kind: PoolKind) -> Self {
        PNConfig { kind, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} out of range: {v}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma (0 < γ ≤ 1)", self.gamma);
        }
        if !(self.eta >= 1.0 && self.eta.is_finite()) {
            return bad("eta (η ≥ 1)", self.eta);
        }
        if !(self.gamma_prime > 0.0 && self.gamma_prime.is_finite()) {
            return bad("gamma_prime (γ' > 0)", self.gamma_prime);
        }
        if !(self.eta_prime >= 1.0 && self.eta_prime.is_finite()) {
            return bad("eta_prime (η' ≥ 1)", self.eta_prime);
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda (λ ≥ 0)", self.lambda);
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta (0 ≤ β ≤ 1)", self.beta);
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad("kappa (κ ≥ 0)", self.kappa);
        }
        if !self.trace_comp_exponent.is_finite() {
            return bad("trace_comp_exponent", self.trace_comp_exponent);
        }
        if self.kind.requires_nonnegative() && self.beta != 0.0 {
            return Err(Error::Validation(format!(
                "{} pooling is undefined for negative co-occurrences; it requires beta = 0 (got {})",
                self.kind, self.beta
            )));
        }
        Ok(())
    }
}

/// Upstream `dℓ/dΨ` paired with the resulting `dℓ/dΦ` (`d × N`).
#[derive(Clone, Debug)]
pub struct PoolGradient {
    pub upstream: SymMatrix,
    pub d_phi: Matrix,
}

fn normalizer(m: &CoocMatrix, lambda: f64) -> Result<f64> {
    let s = m.trace() + lambda;
    if !(s > 0.0) {
        return Err(Error::Numeric(format!(
            "trace normalizer trace(M) + λ = {s:e} is not positive"
        )));
    }
    Ok(s)
}

fn check_nonnegative(m: &CoocMatrix, kind: PoolKind) -> Result<()> {
    if let Some(v) = m.matrix().data().iter().find(|&&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "{kind} pooling is invalid for negative co-occurrence {v:e}"
        )));
    }
    Ok(())
}

/// `(λ + M)^γ` element-wise.
pub fn gamma_fwd(m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    check_nonnegative(m, PoolKind::Gamma)?;
    let (g, l) = (cfg.gamma, cfg.lambda);
    Ok(m.matrix().map_entries(|x| (l + x).powf(g)))
}

/// `1 − (1 − M/(trace(M) + λ))^η` element-wise.
pub fn maxexp_fwd(m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    check_nonnegative(m, PoolKind::MaxExp)?;
    let s = normalizer(m, cfg.lambda)?;
    let p_max = m.matrix().max_abs() / s;
    if p_max > 1.0 + 1e-12 {
        return Err(Error::Invariant(format!(
            "normalized co-occurrence {p_max} exceeds one"
        )));
    }
    let eta = cfg.eta;
    Ok(m.matrix().map_entries(|x| 1.0 - (1.0 - x / s).max(0.0).powf(eta)))
}

/// `2/(1 + e^{−η'·M}) − 1`, or with `M/(trace(M) + λ)` for
/// [`PoolKind::SigmETrace`]. Evaluated as `tanh(η'·x/2)`, which is exactly odd.
pub fn sigme_fwd(m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    let s = if cfg.kind == PoolKind::SigmETrace {
        normalizer(m, cfg.lambda)?
    } else {
        1.0
    };
    let half = 0.5 * cfg.eta_prime / s;
    Ok(m.matrix().map_entries(|x| (half * x).tanh()))
}

/// `asinh(γ'·M) = log(γ'M + sqrt(1 + γ'²M²))` element-wise.
pub fn asinhe_fwd(m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    let gp = cfg.gamma_prime;
    Ok(m.matrix().map_entries(|x| (gp * x).asinh()))
}

/// Trace compensation `Ψ·(trace(M) + λ)^e` and/or residual `Ψ + κ·M`.
pub fn apply_variants(psi: &SymMatrix, m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    let mut out = psi.clone();
    if cfg.trace_comp {
        let s = normalizer(m, cfg.lambda)?;
        out = out.scale(s.powf(cfg.trace_comp_exponent));
    }
    if cfg.residual {
        out = out.add(&m.matrix().scale(cfg.kappa));
    }
    Ok(out)
}

/// The base normalization of `cfg.kind`, without variants.
fn base_forward(m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    match cfg.kind {
        PoolKind::Average => Ok(m.matrix().clone()),
        PoolKind::Gamma => gamma_fwd(m, cfg),
        PoolKind::MaxExp => maxexp_fwd(m, cfg),
        PoolKind::SigmE | PoolKind::SigmETrace => sigme_fwd(m, cfg),
        PoolKind::AsinhE => asinhe_fwd(m, cfg),
    }
}

/// Full element-wise pooling: the kind's normalization followed by the
/// configured variants.
pub fn pn_forward(m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    cfg.validate()?;
    let psi = base_forward(m, cfg)?;
    apply_variants(&psi, m, cfg)
}

/// Scalar derivative `ψ'(p)` of the kind's pooling function at argument
/// `p`. For the trace-normalized kinds `p` is the already-normalized entry.
pub fn scalar_derivative(kind: PoolKind, p: f64, cfg: &PNConfig) -> f64 {
    match kind {
        PoolKind::Average => 1.0,
        PoolKind::Gamma => cfg.gamma * (cfg.lambda + p).powf(cfg.gamma - 1.0),
        PoolKind::MaxExp => cfg.eta * (1.0 - p).max(0.0).powf(cfg.eta - 1.0),
        PoolKind::SigmE | PoolKind::SigmETrace => {
            let t = (0.5 * cfg.eta_prime * p).tanh();
            0.5 * cfg.eta_prime * (1.0 - t * t)
        }
        PoolKind::AsinhE => cfg.gamma_prime / (cfg.gamma_prime * cfg.gamma_prime * p * p + 1.0).sqrt(),
    }
}

/// Entry-wise derivative matrix `D = ∂Ψ_kl/∂M_kl` with the normalizer held
/// fixed. For trace-normalized kinds this is `ψ'(M/s)/s`; the coupling
/// through `trace(M)` is added separately in the backward pass.
pub fn derivative_matrix(m: &CoocMatrix, cfg: &PNConfig) -> Result<SymMatrix> {
    let kind = cfg.kind;
    if kind.requires_nonnegative() {
        check_nonnegative(m, kind)?;
    }
    let s = if kind.is_trace_normalized() {
        normalizer(m, cfg.lambda)?
    } else {
        1.0
    };
    Ok(m.matrix().map_entries(|x| scalar_derivative(kind, x / s, cfg) / s))
}

/// `(2/N)·sym(G)_{1:d,:}·Φ̄`: maps `dℓ/dM` to `dℓ/dΦ`. The spatial-code
/// rows receive no gradient.
pub fn dm_dphi_contract(g: &Matrix, aug: &AugmentedBatch) -> Result<Matrix> {
    let total = aug.total_dim();
    if g.shape() != (total, total) {
        return Err(Error::Dimension(format!(
            "gradient is {:?} but the augmented batch has dimension {total}",
            g.shape()
        )));
    }
    let d = aug.feature_dim();
    let n = aug.len() as f64;
    let sym_top = Matrix::from_fn(d, total, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    Ok(sym_top.matmul(aug.phi_bar()).scale(2.0 / n))
}

/// Chain rule through `φ_n − β·μ`: `g_n ← g_n − (β/N)·Σ_m g_m`.
pub fn centering_bwd(d_phi: &Matrix, beta: f64) -> Matrix {
    if beta == 0.0 {
        return d_phi.clone();
    }
    let n = d_phi.cols() as f64;
    let mut out = d_phi.clone();
    for i in 0..d_phi.rows() {
        let shift = beta * d_phi.row(i).iter().sum::<f64>() / n;
        out.row_mut(i).iter_mut().for_each(|x| *x -= shift);
    }
    out
}

/// Chain rule through rectification: zero the gradient where the raw
/// feature was not positive.
pub fn rectify_bwd(d_phi: &Matrix, raw: &Matrix) -> Matrix {
    d_phi.zip_map(raw, |g, x| if x > 0.0 { g } else { 0.0 })
}

/// `dℓ/dM` for element-wise pooling, including variants.
pub fn pn_grad_m(m: &CoocMatrix, upstream: &SymMatrix, cfg: &PNConfig) -> Result<Matrix> {
    pn_grad_m_impl(m, upstream, cfg, false)
}

fn pn_grad_m_impl(m: &CoocMatrix, upstream: &SymMatrix, cfg: &PNConfig, flip_maxexp: bool) -> Result<Matrix> {
    cfg.validate()?;
    if upstream.dim() != m.dim() {
        return Err(Error::Dimension(format!(
            "upstream gradient has dimension {} but M has dimension {}",
            upstream.dim(),
            m.dim()
        )));
    }
    let mut u = upstream.as_matrix().clone();
    let mut extra_identity = 0.0;
    if cfg.trace_comp {
        let s = normalizer(m, cfg.lambda)?;
        let e = cfg.trace_comp_exponent;
        let psi = base_forward(m, cfg)?;
        extra_identity += u.inner(&psi) * e * s.powf(e - 1.0);
        u = u.scale(s.powf(e));
    }

    let mut d = derivative_matrix(m, cfg)?.into_matrix();
    if flip_maxexp && cfg.kind == PoolKind::MaxExp {
        d = d.scale(-1.0);
    }
    let weighted = u.hadamard(&d);
    let mut grad = weighted.clone();
    if cfg.kind.is_trace_normalized() {
        // ∂(M/s)/∂M_jj contributes −M/s² through s = trace(M) + λ.
        let s = normalizer(m, cfg.lambda)?;
        extra_identity -= weighted.inner(m.matrix()) / s;
    }
    if extra_identity != 0.0 {
        grad = grad.add_identity(extra_identity);
    }
    if cfg.residual {
        grad = grad.add(&upstream.scale(cfg.kappa));
    }
    Ok(grad)
}

/// Backward pass of element-wise pooling to the features that entered
/// centering (i.e. the rectified features).
pub fn pn_bwd(m: &CoocMatrix, aug: &AugmentedBatch, upstream: &SymMatrix, cfg: &PNConfig) -> Result<PoolGradient> {
    pn_bwd_impl(m, aug, upstream, cfg, false)
}

/// [`pn_bwd`] with the MaxExp derivative deliberately negated. Exists so the
/// verification suite can prove that its gradient check detects sign bugs.
#[doc(hidden)]
pub fn pn_bwd_sign_flipped(m: &CoocMatrix, aug: &AugmentedBatch, upstream: &SymMatrix, cfg: &PNConfig) -> Result<PoolGradient> {
    pn_bwd_impl(m, aug, upstream, cfg, true)
}

fn pn_bwd_impl(
    m: &CoocMatrix,
    aug: &AugmentedBatch,
    upstream: &SymMatrix,
    cfg: &PNConfig,
    flip_maxexp: bool,
) -> Result<PoolGradient> {
    let g = pn_grad_m_impl(m, upstream, cfg, flip_maxexp)?;
    let d_phi = centering_bwd(&dm_dphi_contract(&g, aug)?, cfg.beta);
    if !d_phi.is_finite() {
        return Err(Error::Numeric(format!("{} backward produced non-finite gradient", cfg.kind)));
    }
    Ok(PoolGradient {
        upstream: upstream.clone(),
        d_phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregate::{augment, cooc_matrix, FeatureBatch};

    fn cooc(rows: &[Vec<f64>]) -> CoocMatrix {
        CoocMatrix::from_sym(SymMatrix::new(Matrix::from_rows(rows).unwrap()).unwrap())
    }

    fn scalar(p: f64) -> CoocMatrix {
        cooc(&[vec![p]])
    }

    #[test]
    fn kind_round_trips_through_names() {
        for k in PoolKind::ALL {
            assert_eq!(k.name().parse::<PoolKind>().unwrap(), k);
        }
        assert!("nope".parse::<PoolKind>().is_err());
    }

    #[test]
    fn validation_rejects_centering_for_gamma_and_maxexp() {
        for kind in [PoolKind::Gamma, PoolKind::MaxExp] {
            let cfg = PNConfig { beta: 0.5, ..PNConfig::with_kind(kind) };
            assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
        }
        for kind in [PoolKind::SigmE, PoolKind::AsinhE, PoolKind::SigmETrace, PoolKind::Average] {
            let cfg = PNConfig { beta: 0.5, ..PNConfig::with_kind(kind) };
            assert!(cfg.validate().is_ok());
        }
        assert!(PNConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(PNConfig { eta: 0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn gamma_forward_values() {
        let cfg = PNConfig { gamma: 1.0, lambda: 0.0, ..PNConfig::with_kind(PoolKind::Gamma) };
        let m = cooc(&[vec![0.3, 0.1], vec![0.1, 0.2]]);
        assert_eq!(gamma_fwd(&m, &cfg).unwrap(), *m.matrix());

        let cfg = PNConfig { gamma: 0.5, lambda: 0.0, ..cfg };
        assert_eq!(gamma_fwd(&scalar(0.25), &cfg).unwrap()[(0, 0)], 0.5);

        let cfg = PNConfig { lambda: 1e-6, ..cfg };
        let v = gamma_fwd(&scalar(0.01), &cfg).unwrap()[(0, 0)];
        assert!((v - 0.010001f64.sqrt()).abs() < 1e-15);
        assert!((v - 0.1000050).abs() < 1e-7);
    }

    #[test]
    fn gamma_and_maxexp_reject_negative_entries() {
        let m = cooc(&[vec![0.3, -0.1], vec![-0.1, 0.2]]);
        assert!(matches!(gamma_fwd(&m, &PNConfig::with_kind(PoolKind::Gamma)), Err(Error::Domain(_))));
        assert!(matches!(maxexp_fwd(&m, &PNConfig::with_kind(PoolKind::MaxExp)), Err(Error::Domain(_))));
        assert!(sigme_fwd(&m, &PNConfig::with_kind(PoolKind::SigmE)).is_ok());
        assert!(asinhe_fwd(&m, &PNConfig::with_kind(PoolKind::AsinhE)).is_ok());
    }

    #[test]
    fn maxexp_forward_values() {
        let cfg = PNConfig::with_kind(PoolKind::MaxExp);
        assert_eq!(maxexp_fwd(&CoocMatrix::from_sym(SymMatrix::zeros(3)), &cfg).unwrap(), SymMatrix::zeros(3));

        // p = 0.5 after normalization: diag(1, 1) has trace 2 (λ → 0).
        let cfg2 = PNConfig { eta: 2.0, lambda: 0.0, ..cfg };
        let psi = maxexp_fwd(&cooc(&[vec![1.0, 0.0], vec![0.0, 1.0]]), &cfg2).unwrap();
        assert_eq!(psi[(0, 0)], 0.75);

        let cfg1 = PNConfig { eta: 1.0, lambda: 1e-300, ..cfg };
        let m = cooc(&[vec![0.6, 0.2], vec![0.2, 0.4]]);
        let psi = maxexp_fwd(&m, &cfg1).unwrap();
        assert!(psi.sub(&m.matrix().scale(1.0)).max_abs() < 1e-15);
    }

    #[test]
    fn maxexp_output_in_unit_interval() {
        let mut rng_state = 0.37f64;
        let phi = Matrix::from_fn(4, 9, |_, _| {
            rng_state = (rng_state * 9301.0 + 49297.0) % 233280.0 / 233280.0;
            rng_state
        });
        let aug = augment(&FeatureBatch::new(phi, None).unwrap(), &Matrix::zeros(0, 9)).unwrap();
        let psi = maxexp_fwd(&cooc_matrix(&aug).unwrap(), &PNConfig::with_kind(PoolKind::MaxExp)).unwrap();
        assert!(psi.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn sigme_forward_values() {
        let cfg = PNConfig { eta_prime: 25.0, ..PNConfig::with_kind(PoolKind::SigmE) };
        assert_eq!(sigme_fwd(&scalar(0.0), &cfg).unwrap()[(0, 0)], 0.0);
        let v = sigme_fwd(&scalar(0.5), &cfg).unwrap()[(0, 0)];
        let direct = 2.0 / (1.0 + (-12.5f64).exp()) - 1.0;
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.9999926).abs() < 1e-7);
        let neg = sigme_fwd(&scalar(-0.5), &cfg).unwrap()[(0, 0)];
        assert_eq!(neg, -v);
    }

    #[test]
    fn asinhe_forward_values() {
        let cfg = PNConfig { gamma_prime: 1.0, ..PNConfig::with_kind(PoolKind::AsinhE) };
        assert_eq!(asinhe_fwd(&scalar(0.0), &cfg).unwrap()[(0, 0)], 0.0);
        let v = asinhe_fwd(&scalar(1f64.sinh()), &cfg).unwrap()[(0, 0)];
        assert!((v - 1.0).abs() < 1e-15);
        let p = 0.731;
        let a = asinhe_fwd(&scalar(p), &cfg).unwrap()[(0, 0)];
        let b = asinhe_fwd(&scalar(-p), &cfg).unwrap()[(0, 0)];
        assert_eq!(a, -b);
    }

    #[test]
    fn variants() {
        let m = cooc(&[vec![3.0, 1.0], vec![1.0, 1.0]]);
        let psi = SymMatrix::new(Matrix::from_rows(&[vec![0.2, 0.1], vec![0.1, 0.3]]).unwrap()).unwrap();
        let off = PNConfig { kappa: 0.0, ..Default::default() };
        assert_eq!(apply_variants(&psi, &m, &off).unwrap(), psi);

        let resid = PNConfig { kappa: 1.0, residual: true, ..Default::default() };
        assert_eq!(apply_variants(&SymMatrix::zeros(2), &m, &resid).unwrap(), *m.matrix());

        let comp = PNConfig { trace_comp: true, trace_comp_exponent: 0.5, lambda: 0.0, ..Default::default() };
        let out = apply_variants(&psi, &m, &comp).unwrap();
        assert!(out.sub(&psi.scale(2.0)).max_abs() < 1e-15);
    }

    #[test]
    fn table_one_derivatives() {
        let cfg = PNConfig { gamma: 0.5, lambda: 0.0, ..PNConfig::with_kind(PoolKind::Gamma) };
        assert!(scalar_derivative(PoolKind::Gamma, 1e-14, &cfg) > 1e6);
        let cfg = PNConfig::default();
        assert_eq!(scalar_derivative(PoolKind::SigmE, 0.0, &cfg), cfg.eta_prime / 2.0);
        assert_eq!(scalar_derivative(PoolKind::AsinhE, 0.0, &cfg), cfg.gamma_prime);
    }

    #[test]
    fn derivative_matrices_positive_for_well_behaved_kinds() {
        let m = cooc(&[vec![0.4, -0.3], vec![-0.3, 0.9]]);
        for kind in [PoolKind::SigmE, PoolKind::SigmETrace, PoolKind::AsinhE] {
            let d = derivative_matrix(&m, &PNConfig::with_kind(kind)).unwrap();
            assert!(d.data().iter().all(|&x| x > 0.0), "{kind}");
        }
    }

    #[test]
    fn contraction_zero_and_average_by_hand() {
        let phi = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let aug = augment(&FeatureBatch::new(phi, None).unwrap(), &Matrix::zeros(0, 1)).unwrap();
        assert!(dm_dphi_contract(&Matrix::zeros(2, 2), &aug).unwrap().data().iter().all(|&x| x == 0.0));

        let j11 = SymMatrix::diag(&[1.0, 0.0]);
        let m = cooc_matrix(&aug).unwrap();
        let g = pn_bwd(&m, &aug, &j11, &PNConfig::with_kind(PoolKind::Average)).unwrap();
        assert_eq!(g.d_phi.column(0), vec![2.0, 0.0]);
        assert!(dm_dphi_contract(&Matrix::zeros(3, 3), &aug).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let phi = Matrix::from_fn(3, 5, |i, j| 0.1 + 0.05 * (i * 5 + j) as f64);
        let aug = augment(&FeatureBatch::new(phi, None).unwrap(), &Matrix::filled(2, 5, 0.3)).unwrap();
        let m = cooc_matrix(&aug).unwrap();
        for kind in PoolKind::ALL {
            let g = pn_bwd(&m, &aug, &SymMatrix::zeros(5), &PNConfig::with_kind(kind)).unwrap();
            assert!(g.d_phi.data().iter().all(|&x| x == 0.0), "{kind}");
        }
    }
}

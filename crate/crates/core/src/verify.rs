//! Self-verification suites behind the `verify` command: probabilistic
//! identities, spectral dual-path agreement and finite-difference gradient
//! checks of every backward pass.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::aggregate::{augment, cooc_matrix, rectify_center, CoocMatrix, FeatureBatch};
use crate::error::{Error, Result};
use crate::gradcheck::{central_diff_grad, compare, GradReport, DEFAULT_STEP};
use crate::kernelmap::PivotGrid;
use crate::linalg::{rel_frobenius, sym, Matrix, SymMatrix};
use crate::pn::{pn_bwd, pn_bwd_sign_flipped, pn_forward, PNConfig, PoolKind};
use crate::probmodel::{binom_at_least_one, multinom_at_least_one, BernoulliPool, MAX_TRIALS};
use crate::spectral::{
    maxexp_spectral_bwd_closed, spectral_bwd_eigen, spectral_fwd, spectral_grad_m, sqrt_bwd_sylvester, SpectralKind,
    SpectralPlan,
};
use crate::synth::{random_codes, random_psd, random_sym, uniform_matrix};

pub const SUITES: [&str; 5] = [
    "probmodel-binomial",
    "probmodel-multinomial",
    "spectral-dual-path",
    "gradcheck-elementwise",
    "gradcheck-spectral",
];

pub const GRAD_REL_TOL: f64 = 1e-5;
pub const GRAD_ABS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Exact suite name or prefix (`probmodel` selects both identity suites).
    pub suite: Option<String>,
    /// Negate the MaxExp derivative to prove the gradient check bites.
    pub break_sign: bool,
    pub seed: u64,
    /// Random instances per gradient-check configuration.
    pub instances: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest error seen, in the suite's own metric.
    pub max_err: f64,
    /// First failing invariant, if any.
    pub invariant: Option<String>,
    pub elapsed_ms: f64,
}

struct Outcome {
    cases: usize,
    max_err: f64,
    failure: Option<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { cases: 0, max_err: 0.0, failure: None }
    }

    fn record(&mut self, err: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if err > self.max_err || err.is_nan() {
            self.max_err = err;
        }
        if !ok && self.failure.is_none() {
            self.failure = Some(describe());
        }
    }

    fn merge(mut self, other: Outcome) -> Outcome {
        self.cases += other.cases;
        if other.max_err > self.max_err || other.max_err.is_nan() {
            self.max_err = other.max_err;
        }
        self.failure = self.failure.or(other.failure);
        self
    }
}

pub fn selected_suites(filter: Option<&str>) -> Result<Vec<&'static str>> {
    let chosen: Vec<_> = SUITES
        .into_iter()
        .filter(|s| filter.is_none_or(|f| *s == f || s.starts_with(&format!("{f}-"))))
        .collect();
    if chosen.is_empty() {
        return Err(Error::Config(format!(
            "unknown suite '{}' (choose from {})",
            filter.unwrap_or_default(),
            SUITES.join(", ")
        )));
    }
    Ok(chosen)
}

/// Runs the selected suites with hyperparameters from `params`.
pub fn cmd_verify(params: &PNConfig, opts: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    let suites = selected_suites(opts.suite.as_deref())?;
    let instances = opts.instances.max(1);
    suites
        .into_iter()
        .map(|suite| {
            let start = Instant::now();
            let out = match suite {
                "probmodel-binomial" => binomial_identity(),
                "probmodel-multinomial" => multinomial_identity()?,
                "spectral-dual-path" => spectral_dual_path(params, opts.seed, instances)?,
                "gradcheck-elementwise" => elementwise_grads(params, opts.seed, instances, opts.break_sign)?,
                "gradcheck-spectral" => spectral_grads(params, opts.seed, instances)?,
                _ => unreachable!("suite list is fixed"),
            };
            Ok(SuiteReport {
                suite,
                passed: out.failure.is_none(),
                cases: out.cases,
                max_err: out.max_err,
                invariant: out.failure,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}

fn binomial_identity() -> Outcome {
    let mut out = Outcome::new();
    for n in 1..=MAX_TRIALS {
        for k in 0..=100 {
            let p = k as f64 / 100.0;
            let pool = BernoulliPool::binomial(n, p).expect("valid grid");
            let err = (binom_at_least_one(&pool) - pool.closed_form()).abs();
            out.record(err, err <= 1e-12, || {
                format!("binomial expansion != 1-(1-p)^N at N={n}, p={p} (error {err:e})")
            });
        }
    }
    out
}

fn multinomial_identity() -> Result<Outcome> {
    let mut out = Outcome::new();
    let steps = 8;
    for n in [1, 2, 3, 5, 8, 12] {
        for i in 0..=steps {
            for j in 0..=steps - i {
                for k in 0..=steps - i - j {
                    let (p, q, s) = (i as f64 / steps as f64, j as f64 / steps as f64, k as f64 / steps as f64);
                    let pool = BernoulliPool::new(n, p, q, s)?;
                    let err = (multinom_at_least_one(&pool)? - pool.closed_form()).abs();
                    out.record(err, err <= 1e-10, || {
                        format!("multinomial sum != 1-(1-p)^N at N={n}, (p,q,s)=({p},{q},{s}) (error {err:e})")
                    });
                }
            }
        }
    }
    Ok(out)
}

fn spectral_params(params: &PNConfig, kind: SpectralKind) -> PNConfig {
    let mut p = *params;
    p.beta = 0.0;
    p.trace_comp = false;
    p.residual = false;
    if kind == SpectralKind::MaxExp {
        p.eta = p.eta.round().max(1.0);
    }
    p
}

fn spectral_dual_path(params: &PNConfig, seed: u64, instances: usize) -> Result<Outcome> {
    let cases: Vec<Result<Outcome>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ec7);
            rng.set_stream(i as u64);
            let dim = rng.random_range(2..=8);
            let m = CoocMatrix::from_sym(random_psd(&mut rng, dim, 0.1));
            let mut out = Outcome::new();
            for kind in SpectralKind::ALL {
                let p = spectral_params(params, kind);
                let eig = spectral_fwd(&m, &SpectralPlan::eigen(kind, p)?)?;
                let closed = spectral_fwd(&m, &SpectralPlan::closed(kind, p)?)?;
                let err = rel_frobenius(&closed, &eig, 1.0);
                out.record(err, err <= 1e-10, || {
                    format!("closed-form {kind} forward disagrees with eigen path (instance {i}, error {err:e})")
                });
            }
            let w = random_sym(&mut rng, dim);
            let syl = sqrt_bwd_sylvester(m.matrix(), &w)?;
            let eig = spectral_bwd_eigen(m.matrix(), &w, f64::sqrt, |x| 0.5 / x.sqrt())?;
            let err = rel_frobenius(&syl, &eig, 1.0);
            out.record(err, err <= 1e-8, || {
                format!("Sylvester sqrt backward disagrees with eigen path (instance {i}, error {err:e})")
            });
            for eta in [1u32, 2, 4, 7] {
                let p = PNConfig { eta: eta as f64, ..spectral_params(params, SpectralKind::MaxExp) };
                let closed = maxexp_spectral_bwd_closed(&m, &w, eta, p.lambda)?;
                let eig = spectral_grad_m(&m, &w, &SpectralPlan::eigen(SpectralKind::MaxExp, p)?)?;
                let err = rel_frobenius(&closed, &eig, 1.0);
                out.record(err, err <= 1e-8, || {
                    format!("closed MaxExp backward (eta={eta}) disagrees with eigen path (instance {i}, error {err:e})")
                });
            }
            Ok(out)
        })
        .collect();
    cases.into_iter().try_fold(Outcome::new(), |acc, c| Ok(acc.merge(c?)))
}

/// Finite-difference check of the element-wise backward pass for one
/// random instance. The loss is `⟨W, Ψ⟩` for a random symmetric `W`, as a
/// function of the rectified `d × n` features.
pub fn elementwise_grad_case(
    cfg: &PNConfig,
    d: usize,
    code_dim: usize,
    n: usize,
    seed: u64,
    break_sign: bool,
) -> Result<GradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = uniform_matrix(&mut rng, d, n, 0.05, 1.0);
    let codes = if code_dim == 0 {
        Matrix::zeros(0, n)
    } else {
        random_codes(&mut rng, n, 0.5, &PivotGrid::with_default_sigma(code_dim / 2)?)
    };
    let w = random_sym(&mut rng, d + codes.rows());
    let forward = |x: &Matrix| -> Result<(crate::aggregate::AugmentedBatch, CoocMatrix)> {
        let batch = rectify_center(&FeatureBatch::new(x.clone(), None)?, cfg.beta)?;
        let aug = augment(&batch, &codes)?;
        let m = cooc_matrix(&aug)?;
        Ok((aug, m))
    };
    let (aug, m) = forward(&phi)?;
    let grad = if break_sign {
        pn_bwd_sign_flipped(&m, &aug, &w, cfg)?
    } else {
        pn_bwd(&m, &aug, &w, cfg)?
    };
    let numeric = central_diff_grad(
        |x| {
            let (_, m) = forward(x)?;
            Ok(pn_forward(&m, cfg)?.inner(&w))
        },
        &phi,
        DEFAULT_STEP,
    )?;
    compare(&grad.d_phi, &numeric, GRAD_REL_TOL, GRAD_ABS_TOL)
}

fn elementwise_grads(params: &PNConfig, seed: u64, instances: usize, break_sign: bool) -> Result<Outcome> {
    let mut jobs = Vec::new();
    for kind in PoolKind::ALL {
        for beta in [0.0, 0.5] {
            let cfg = PNConfig { kind, beta, trace_comp: false, residual: false, ..*params };
            if cfg.validate().is_err() {
                continue;
            }
            for i in 0..instances {
                jobs.push((cfg, i));
            }
        }
    }
    let results: Vec<Result<Outcome>> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(cfg, i))| {
            let d = [3, 8][i % 2];
            let code_dim = [0, 6][(i / 2) % 2];
            let n = [5, 20][(i / 4) % 2];
            let report = elementwise_grad_case(&cfg, d, code_dim, n, seed.wrapping_add(job as u64), break_sign)?;
            let mut out = Outcome::new();
            out.record(report.max_rel_err, report.passed, || {
                format!(
                    "{} gradient (beta={}, d={d}, Z'={code_dim}, N={n}) mismatches finite differences: max_rel_err {:e} at {:?}",
                    cfg.kind, cfg.beta, report.max_rel_err, report.worst_index
                )
            });
            Ok(out)
        })
        .collect();
    results.into_iter().try_fold(Outcome::new(), |acc, c| Ok(acc.merge(c?)))
}

/// Finite-difference gradient of `X ↦ ⟨W, f(sym(X))⟩` at `M`.
pub fn matrix_fd_grad<F>(f: F, m: &SymMatrix, w: &SymMatrix) -> Result<Matrix>
where
    F: Fn(&SymMatrix) -> Result<SymMatrix> + Sync,
{
    central_diff_grad(|x| Ok(f(&sym(x)?)?.inner(w)), m.as_matrix(), DEFAULT_STEP)
}

fn spectral_grads(params: &PNConfig, seed: u64, instances: usize) -> Result<Outcome> {
    let results: Vec<Result<Outcome>> = (0..instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9ad);
            rng.set_stream(i as u64);
            let dim = rng.random_range(2..=8);
            let m = random_psd(&mut rng, dim, 0.1);
            let w = random_sym(&mut rng, dim);
            let cm = CoocMatrix::from_sym(m.clone());
            let mut out = Outcome::new();
            let mut check = |name: String, analytic: &Matrix, f: &(dyn Fn(&SymMatrix) -> Result<SymMatrix> + Sync)| -> Result<()> {
                let numeric = matrix_fd_grad(f, &m, &w)?;
                let report = compare(analytic, &numeric, GRAD_REL_TOL, GRAD_ABS_TOL)?;
                out.record(report.max_rel_err, report.passed, || {
                    format!("{name} gradient mismatches finite differences (instance {i}, max_rel_err {:e})", report.max_rel_err)
                });
                Ok(())
            };
            for kind in SpectralKind::ALL {
                let plan = SpectralPlan::eigen(kind, spectral_params(params, kind))?;
                let g = spectral_grad_m(&cm, &w, &plan)?;
                check(format!("spectral {kind}"), &g, &|x| spectral_fwd(&CoocMatrix::from_sym(x.clone()), &plan))?;
            }
            let g = sqrt_bwd_sylvester(&m, &w)?;
            check("Sylvester sqrt".into(), &g, &|x| crate::linalg::sqrtm_spd(x))?;
            for eta in [1u32, 2, 4, 7] {
                let p = PNConfig { eta: eta as f64, ..spectral_params(params, SpectralKind::MaxExp) };
                let plan = SpectralPlan::closed(SpectralKind::MaxExp, p)?;
                let g = maxexp_spectral_bwd_closed(&cm, &w, eta, p.lambda)?;
                check(format!("closed MaxExp (eta={eta})"), &g, &|x| {
                    spectral_fwd(&CoocMatrix::from_sym(x.clone()), &plan)
                })?;
            }
            Ok(out)
        })
        .collect();
    results.into_iter().try_fold(Outcome::new(), |acc, c| Ok(acc.merge(c?)))
}

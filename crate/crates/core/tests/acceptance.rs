//! Acceptance checks. Runs as a plain binary so each check prints one
//! PASS/FAIL line regardless of output capture.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sopool::aggregate::{augment, cooc_matrix, rectify_center, CoocMatrix, FeatureBatch};
use sopool::bench::cmd_bench;
use sopool::config::RunConfig;
use sopool::demo::cmd_demo_train;
use sopool::gradcheck::{central_diff_grad, compare, DEFAULT_STEP};
use sopool::kernelmap::{linearization_error, PivotGrid};
use sopool::linalg::{rel_frobenius, sym, sym_eig, Matrix, SymMatrix};
use sopool::pn::{pn_bwd, pn_forward, scalar_derivative, PNConfig, PoolKind};
use sopool::probmodel::{binom_at_least_one, multinom_at_least_one, BernoulliPool};
use sopool::spectral::{
    maxexp_spectral_bwd_closed, spectral_fwd, spectral_grad_m, sqrt_bwd_sylvester, SpectralKind, SpectralPlan,
};
use sopool::synth::{random_codes, random_orthogonal, random_psd, random_sym, uniform_matrix};
use sopool::Error;

const REL_TOL: f64 = 1e-5;
const ABS_TOL: f64 = 1e-8;

struct Check {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: impl Into<String>) -> Check {
    Check { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn elementwise_gradients() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for kind in PoolKind::ALL {
        for beta in [0.0, 0.5] {
            let cfg = PNConfig { kind, beta, ..PNConfig::default() };
            if cfg.validate().is_err() {
                continue;
            }
            for i in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * i + kind as u64 * 10 + (beta * 2.0) as u64);
                let d = [3, 8][rng.random_range(0..2)];
                let zp = [0, 6][rng.random_range(0..2)];
                let n = [5, 20][rng.random_range(0..2)];
                let phi = uniform_matrix(&mut rng, d, n, 0.05, 1.0);
                let codes = if zp == 0 {
                    Matrix::zeros(0, n)
                } else {
                    random_codes(&mut rng, n, 0.5, &PivotGrid::with_default_sigma(zp / 2).unwrap())
                };
                let w = random_sym(&mut rng, d + zp);
                let forward = |x: &Matrix| -> Result<_, Error> {
                    let batch = rectify_center(&FeatureBatch::new(x.clone(), None)?, beta)?;
                    let aug = augment(&batch, &codes)?;
                    let m = cooc_matrix(&aug)?;
                    Ok((aug, m))
                };
                let (aug, m) = forward(&phi).unwrap();
                let analytic = pn_bwd(&m, &aug, &w, &cfg).unwrap().d_phi;
                let numeric = central_diff_grad(
                    |x| Ok(pn_forward(&forward(x)?.1, &cfg)?.inner(&w)),
                    &phi,
                    DEFAULT_STEP,
                )
                .unwrap();
                let report = compare(&analytic, &numeric, REL_TOL, ABS_TOL).unwrap();
                cases += 1;
                if !report.passed {
                    return check(
                        false,
                        format!(
                            "{kind} beta={beta} instance {i} (d={d}, Z'={zp}, N={n}): max_rel_err {:e} at {:?}",
                            report.max_rel_err, report.worst_index
                        ),
                    );
                }
                worst = worst.max(report.max_abs_err);
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        within(elapsed, 60),
        format!("{cases} instances, max abs error {worst:.2e}, {:.1?}", elapsed),
    )
}

fn fd_matrix_grad(
    f: impl Fn(&SymMatrix) -> Result<SymMatrix, Error> + Sync,
    m: &SymMatrix,
    w: &SymMatrix,
) -> Matrix {
    central_diff_grad(|x| Ok(f(&sym(x)?)?.inner(w)), m.as_matrix(), DEFAULT_STEP).unwrap()
}

fn spectral_gradients() -> Check {
    let start = Instant::now();
    let params = PNConfig::default();
    let mut cases = 0;
    let (mut syl_gap, mut maxexp_gap) = (0.0f64, 0.0f64);
    for i in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(77 + i);
        let dim = rng.random_range(2..=8);
        let m = random_psd(&mut rng, dim, 0.1);
        let w = random_sym(&mut rng, dim);
        let cm = CoocMatrix::from_sym(m.clone());
        let mut grads: Vec<(String, Matrix, Matrix)> = Vec::new();
        for kind in SpectralKind::ALL {
            let plan = SpectralPlan::eigen(kind, params).unwrap();
            let g = spectral_grad_m(&cm, &w, &plan).unwrap();
            let fd = fd_matrix_grad(|x| spectral_fwd(&CoocMatrix::from_sym(x.clone()), &plan), &m, &w);
            grads.push((format!("eigen {kind}"), g.into_matrix(), fd));
        }
        let syl = sqrt_bwd_sylvester(&m, &w).unwrap();
        let sqrt_plan = SpectralPlan::eigen(SpectralKind::Gamma, PNConfig { gamma: 0.5, ..params }).unwrap();
        let eig_sqrt = spectral_grad_m(&cm, &w, &sqrt_plan).unwrap();
        syl_gap = syl_gap.max(rel_frobenius(&syl, &eig_sqrt, 1.0));
        let fd = fd_matrix_grad(|x| sopool::linalg::sqrtm_spd(x), &m, &w);
        grads.push(("sylvester sqrt".into(), syl.into_matrix(), fd));
        for eta in [1u32, 2, 4, 7] {
            let p = PNConfig { eta: eta as f64, ..params };
            let closed = maxexp_spectral_bwd_closed(&cm, &w, eta, p.lambda).unwrap();
            let eig = spectral_grad_m(&cm, &w, &SpectralPlan::eigen(SpectralKind::MaxExp, p).unwrap()).unwrap();
            maxexp_gap = maxexp_gap.max(rel_frobenius(&closed, &eig, 1.0));
            let plan = SpectralPlan::closed(SpectralKind::MaxExp, p).unwrap();
            let fd = fd_matrix_grad(|x| spectral_fwd(&CoocMatrix::from_sym(x.clone()), &plan), &m, &w);
            grads.push((format!("closed maxexp eta={eta}"), closed.into_matrix(), fd));
        }
        for (name, analytic, numeric) in grads {
            let report = compare(&analytic, &numeric, REL_TOL, ABS_TOL).unwrap();
            cases += 1;
            if !report.passed {
                return check(false, format!("{name} instance {i}: max_rel_err {:e}", report.max_rel_err));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        syl_gap <= 1e-8 && maxexp_gap <= 1e-8 && within(elapsed, 120),
        format!(
            "{cases} gradient checks; sylvester vs eigen {syl_gap:.1e}, closed vs eigen maxexp {maxexp_gap:.1e}, {elapsed:.1?}"
        ),
    )
}

fn probabilistic_identities() -> Check {
    let start = Instant::now();
    let mut binom_err = 0.0f64;
    for n in 1..=30 {
        for k in 0..=100 {
            let pool = BernoulliPool::binomial(n, k as f64 / 100.0).unwrap();
            binom_err = binom_err.max((binom_at_least_one(&pool) - pool.closed_form()).abs());
        }
    }
    let steps = 14;
    let mut points = 0;
    let mut multi_err = 0.0f64;
    for i in 0..=steps {
        for j in 0..=steps - i {
            for k in 0..=steps - i - j {
                points += 1;
                let (p, q, s) = (i as f64 / steps as f64, j as f64 / steps as f64, k as f64 / steps as f64);
                for n in 1..=12 {
                    let pool = BernoulliPool::new(n, p, q, s).unwrap();
                    multi_err = multi_err.max((multinom_at_least_one(&pool).unwrap() - pool.closed_form()).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        binom_err <= 1e-12 && multi_err <= 1e-10 && points >= 500 && within(elapsed, 10),
        format!("binomial max error {binom_err:.1e}; multinomial max error {multi_err:.1e} over {points} simplex points; {elapsed:.1?}"),
    )
}

fn derivative_behaviour() -> Check {
    let gamma = PNConfig { kind: PoolKind::Gamma, lambda: 0.0, ..PNConfig::default() };
    let d_gamma = scalar_derivative(PoolKind::Gamma, 1e-14, &gamma);
    let cfg = PNConfig::default();
    let d_sigme = scalar_derivative(PoolKind::SigmE, 0.0, &cfg);
    let d_asinhe = scalar_derivative(PoolKind::AsinhE, 0.0, &cfg);
    let negative = CoocMatrix::from_sym(SymMatrix::new(Matrix::from_rows(&[vec![0.5, -0.1], vec![-0.1, 0.3]]).unwrap()).unwrap());
    let rejects = |kind| matches!(pn_forward(&negative, &PNConfig { kind, lambda: 0.0, ..cfg }), Err(Error::Domain(_)));
    let accepts = |kind| pn_forward(&negative, &PNConfig { kind, ..cfg }).is_ok();
    let ok = d_gamma > 1e6
        && d_sigme.is_finite()
        && d_sigme == cfg.eta_prime / 2.0
        && d_asinhe == cfg.gamma_prime
        && rejects(PoolKind::Gamma)
        && rejects(PoolKind::MaxExp)
        && accepts(PoolKind::SigmE)
        && accepts(PoolKind::AsinhE);
    check(
        ok,
        format!("gamma'(1e-14) = {d_gamma:.2e}, sigme'(0) = {d_sigme}, asinhe'(0) = {d_asinhe}; negatives rejected by gamma/maxexp only"),
    )
}

fn spectral_dual_path() -> Check {
    let params = PNConfig::default();
    let mut worst = 0.0f64;
    for kind in SpectralKind::ALL {
        for i in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + i);
            let dim = rng.random_range(2..=8);
            let m = CoocMatrix::from_sym(random_psd(&mut rng, dim, 0.05));
            let eig = spectral_fwd(&m, &SpectralPlan::eigen(kind, params).unwrap()).unwrap();
            let closed = spectral_fwd(&m, &SpectralPlan::closed(kind, params).unwrap()).unwrap();
            let err = eig.sub(&closed).frobenius();
            if !(err <= 1e-10) {
                return check(false, format!("{kind} instance {i}: Frobenius gap {err:e}"));
            }
            worst = worst.max(err);
        }
    }
    check(true, format!("200 matrices, max Frobenius gap {worst:.1e}"))
}

fn kernel_linearization() -> Check {
    let grid = PivotGrid::with_default_sigma(10).unwrap();
    let fit = linearization_error(&grid, 100);
    check(
        fit.max_err_minimax < 0.05,
        format!(
            "Z=10, sigma={:.4}: max error {:.4} (c={:.4}); least-squares c gives {:.4}",
            grid.sigma(),
            fit.max_err_minimax,
            fit.c_minimax,
            fit.max_err_lsq
        ),
    )
}

fn complexity() -> Check {
    let table = cmd_bench(&[64, 128, 256, 512], 3, 0).unwrap();
    let ratios: Vec<f64> = table.ratios.iter().map(|r| r.ratio).collect();
    let monotone = ratios.windows(2).all(|w| w[1] > w[0]);
    let last = *ratios.last().unwrap();
    check(
        monotone && last >= 10.0,
        format!(
            "spectral/element-wise ratios {}",
            table
                .ratios
                .iter()
                .map(|r| format!("d={}: {:.0}x", r.dim, r.ratio))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn end_to_end_learning() -> Check {
    let base = RunConfig { pn: PNConfig::with_kind(PoolKind::SigmE), classes: 3, epochs: 50, seed: 0, ..RunConfig::default() };
    let start = Instant::now();
    let with_codes = cmd_demo_train(&RunConfig { alpha: 1.0, ..base.clone() }).unwrap();
    let elapsed = start.elapsed();
    let without = cmd_demo_train(&RunConfig { alpha: 0.0, ..base }).unwrap();
    let ok = with_codes.final_loss < 0.5 * with_codes.initial_loss
        && within(elapsed, 60)
        && with_codes.final_loss < without.final_loss;
    check(
        ok,
        format!(
            "alpha=1: {:.3} -> {:.3} in {elapsed:.1?}; alpha=0: {:.3} -> {:.3}",
            with_codes.initial_loss, with_codes.final_loss, without.initial_loss, without.final_loss
        ),
    )
}

fn structural_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_psd = 0.0f64;
    let mut worst_perm = 0.0f64;
    let mut worst_equiv = 0.0f64;
    for i in 0..20 {
        let d = rng.random_range(2..=8);
        let n = rng.random_range(3..=30);
        let raw = uniform_matrix(&mut rng, d, n, -1.0, 1.0);
        let beta = [0.0, 0.5, 1.0][i % 3];
        let batch = rectify_center(&FeatureBatch::new(raw, None).unwrap(), beta).unwrap();
        let codes = random_codes(&mut rng, n, 0.7, &PivotGrid::with_default_sigma(3).unwrap());
        let aug = augment(&batch, &codes).unwrap();
        let m = cooc_matrix(&aug).unwrap();

        let eig = sym_eig(m.matrix()).unwrap();
        worst_psd = worst_psd.min(eig.min_value() / m.trace().max(f64::MIN_POSITIVE));
        if eig.min_value() < -1e-9 * m.trace() {
            return check(false, format!("co-occurrence matrix not PSD (instance {i})"));
        }

        for kind in PoolKind::ALL {
            let cfg = PNConfig { kind, ..PNConfig::default() };
            if let Ok(psi) = pn_forward(&m, &cfg) {
                if psi.asymmetry() != 0.0 {
                    return check(false, format!("{kind} output not exactly symmetric"));
                }
            }
        }
        for kind in SpectralKind::ALL {
            for plan in [SpectralPlan::eigen(kind, PNConfig::default()), SpectralPlan::closed(kind, PNConfig::default())] {
                let psi = spectral_fwd(&m, &plan.unwrap());
                if let Ok(psi) = psi {
                    if psi.asymmetry() != 0.0 {
                        return check(false, format!("spectral {kind} output not exactly symmetric"));
                    }
                }
            }
        }

        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left(n / 3);
        let phi_bar = aug.phi_bar();
        let permuted_feats = Matrix::from_fn(d, n, |r, c| phi_bar[(r, perm[c])]);
        let permuted_codes = Matrix::from_fn(codes.rows(), n, |r, c| codes[(r, perm[c])]);
        let aug_p = augment(&FeatureBatch::new(permuted_feats, None).unwrap(), &permuted_codes).unwrap();
        let m_p = cooc_matrix(&aug_p).unwrap();
        worst_perm = worst_perm.max(rel_frobenius(m_p.matrix(), m.matrix(), 1e-300));

        let spd = random_psd(&mut rng, m.dim(), 0.05);
        let q = random_orthogonal(&mut rng, m.dim());
        for kind in SpectralKind::ALL {
            let plan = SpectralPlan::eigen(kind, PNConfig::default()).unwrap();
            let lhs = spectral_fwd(&CoocMatrix::from_sym(spd.conjugate(&q)), &plan).unwrap();
            let rhs = spectral_fwd(&CoocMatrix::from_sym(spd.clone()), &plan).unwrap().conjugate(&q);
            worst_equiv = worst_equiv.max(lhs.sub(&rhs).frobenius());
        }
    }
    check(
        worst_perm <= 1e-12 && worst_equiv <= 1e-8,
        format!(
            "exact symmetry; min eig/trace {worst_psd:.1e}; permutation gap {worst_perm:.1e}; conjugation gap {worst_equiv:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 9] = [
        ("element-wise gradients match finite differences", elementwise_gradients),
        ("spectral gradients match finite differences", spectral_gradients),
        ("probabilistic identities", probabilistic_identities),
        ("pooling-function derivative behaviour", derivative_behaviour),
        ("spectral closed forms match eigen forms", spectral_dual_path),
        ("kernel linearization quality", kernel_linearization),
        ("element-wise vs spectral cost", complexity),
        ("end-to-end learning with spatial codes", end_to_end_learning),
        ("structural invariants", structural_invariants),
    ];
    let mut failures = 0;
    for (i, (name, run)) in checks.iter().enumerate() {
        let result = run();
        let status = if result.passed { "PASS" } else { "FAIL" };
        println!("acceptance {}: {status} {name} ({})", i + 1, result.detail);
        failures += usize::from(!result.passed);
    }
    println!("acceptance: {}/{} passed", checks.len() - failures, checks.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

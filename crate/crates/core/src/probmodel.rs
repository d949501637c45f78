//! Bernoulli and multinomial models of feature (co-)occurrence, with exact
//! expansions of the "at least one event in N trials" probability and a
//! Monte-Carlo estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MAX_TRIALS: u32 = 30;
/// Largest `N` for which multinomial coefficients are also checked in exact
/// integer arithmetic.
pub const EXACT_TRIALS: u32 = 12;
const SHARD_SIZE: u64 = 1 << 16;

/// Four-outcome trial: co-occurrence (`p`), first feature only (`q`),
/// second feature only (`s`), neither (`1 − p − q − s`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BernoulliPool {
    n: u32,
    p: f64,
    q: f64,
    s: f64,
}

impl BernoulliPool {
    pub fn new(n: u32, p: f64, q: f64, s: f64) -> Result<Self> {
        if n == 0 || n > MAX_TRIALS {
            return Err(Error::Validation(format!("trial count must be in 1..={MAX_TRIALS}, got {n}")));
        }
        for (name, v) in [("p", p), ("q", q), ("s", s)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation(format!("{name} = {v} is not a probability")));
            }
        }
        if p + q + s > 1.0 + 1e-12 {
            return Err(Error::Validation(format!("p + q + s = {} exceeds 1", p + q + s)));
        }
        Ok(BernoulliPool { n, p, q, s })
    }

    pub fn binomial(n: u32, p: f64) -> Result<Self> {
        BernoulliPool::new(n, p, 0.0, 0.0)
    }

    pub fn trials(&self) -> u32 {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    fn rest(&self) -> f64 {
        (1.0 - self.p - self.q - self.s).max(0.0)
    }

    /// `1 − (1 − p)^N`.
    pub fn closed_form(&self) -> f64 {
        1.0 - (1.0 - self.p).powi(self.n as i32)
    }
}

fn ln_factorials(n: u32) -> Vec<f64> {
    let mut table = vec![0.0; n as usize + 1];
    for k in 1..=n as usize {
        table[k] = table[k - 1] + (k as f64).ln();
    }
    table
}

fn exact_factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

/// `N! / (k₁!·k₂!·…)` in exact integer arithmetic; `None` if the parts do
/// not sum to `N` or `N > 20`.
pub fn multinomial_exact(n: u32, parts: &[u32]) -> Option<u64> {
    if n > 20 || parts.iter().sum::<u32>() != n {
        return None;
    }
    Some(parts.iter().fold(exact_factorial(n), |acc, &k| acc / exact_factorial(k)))
}

/// `Σ_{n=1}^{N} C(N, n)·pⁿ·(1 − p)^{N−n}`.
pub fn binom_at_least_one(pool: &BernoulliPool) -> f64 {
    let big_n = pool.n;
    let lf = ln_factorials(big_n);
    let p = pool.p;
    let mut total = 0.0;
    for n in 1..=big_n {
        let coeff = (lf[big_n as usize] - lf[n as usize] - lf[(big_n - n) as usize]).exp().round();
        total += coeff * p.powi(n as i32) * (1.0 - p).powi((big_n - n) as i32);
    }
    total
}

/// Triple sum over `(n, n′, n″)`, `n ≥ 1`, of the four-outcome multinomial
/// probabilities: the probability of at least one co-occurrence.
pub fn multinom_at_least_one(pool: &BernoulliPool) -> Result<f64> {
    let big_n = pool.n;
    if big_n > MAX_TRIALS {
        return Err(Error::Validation(format!("trial count {big_n} exceeds {MAX_TRIALS}")));
    }
    let lf = ln_factorials(big_n);
    let (p, q, s, r) = (pool.p, pool.q, pool.s, pool.rest());
    let mut total = 0.0;
    for n in 1..=big_n {
        for n1 in 0..=big_n - n {
            for n2 in 0..=big_n - n - n1 {
                let n3 = big_n - n - n1 - n2;
                let ln_coeff = lf[big_n as usize] - lf[n as usize] - lf[n1 as usize] - lf[n2 as usize] - lf[n3 as usize];
                let coeff = ln_coeff.exp().round();
                if big_n <= EXACT_TRIALS {
                    let exact = multinomial_exact(big_n, &[n, n1, n2, n3]).expect("parts sum to N");
                    if exact as f64 != coeff {
                        return Err(Error::Invariant(format!(
                            "multinomial coefficient ({n}, {n1}, {n2}, {n3}) of {big_n}: log-space {coeff} vs exact {exact}"
                        )));
                    }
                }
                total += coeff * p.powi(n as i32) * q.powi(n1 as i32) * s.powi(n2 as i32) * r.powi(n3 as i32);
            }
        }
    }
    Ok(total)
}

/// Monte-Carlo frequency of at least one co-occurrence in `N` draws.
///
/// Trials are split into fixed-size shards; shard `k` draws from ChaCha8
/// seeded with `seed` on stream `k`, so the result does not depend on the
/// number of threads.
pub fn simulate_cooc(pool: &BernoulliPool, trials: u64, seed: u64) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Validation("at least one trial is required".into()));
    }
    let shards = trials.div_ceil(SHARD_SIZE);
    let p = pool.p;
    let hits: u64 = (0..shards)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let count = SHARD_SIZE.min(trials - k * SHARD_SIZE);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut hit = false;
                for _ in 0..pool.n {
                    hit |= rng.random::<f64>() < p;
                }
                hits += hit as u64;
            }
            hits
        })
        .sum();
    Ok(hits as f64 / trials as f64)
}

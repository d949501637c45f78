//! Element-wise versus spectral pooling timings.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::aggregate::CoocMatrix;
use crate::error::{Error, Result};
use crate::pn::{pn_forward, PNConfig, PoolKind};
use crate::spectral::{spectral_fwd, SpectralKind, SpectralPlan};
use crate::synth::random_psd;

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub dim: usize,
    pub kind: &'static str,
    pub path: &'static str,
    pub median_ns: u128,
    pub reps: usize,
}

/// Spectral over element-wise median time at one dimension.
#[derive(Clone, Debug, Serialize)]
pub struct BenchRatio {
    pub dim: usize,
    pub kind: &'static str,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub ratios: Vec<BenchRatio>,
}

fn median_ns(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<u128> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_nanos());
    }
    times.sort_unstable();
    Ok(times[times.len() / 2])
}

/// Median wall time of the SigmE forward pass, element-wise and spectral
/// (eigen path), on the same random PSD matrix for each dimension. Timings
/// run on a single-thread pool.
pub fn cmd_bench(dims: &[usize], reps: usize, seed: u64) -> Result<BenchTable> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build benchmark thread pool: {e}")))?
        .install(|| bench_single_threaded(dims, reps, seed))
}

fn bench_single_threaded(dims: &[usize], reps: usize, seed: u64) -> Result<BenchTable> {
    if reps == 0 {
        return Err(Error::Config("benchmark needs at least one repetition".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| !(16..=4096).contains(&d)) {
        return Err(Error::Config(format!("benchmark dims must lie in [16, 4096], got {d}")));
    }
    let params = PNConfig::with_kind(PoolKind::SigmE);
    let plan = SpectralPlan::eigen(SpectralKind::SigmE, params)?;
    let mut table = BenchTable { rows: Vec::new(), ratios: Vec::new() };
    for &dim in dims {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(dim as u64));
        let m = CoocMatrix::from_sym(random_psd(&mut rng, dim, 1e-3));
        let elementwise = median_ns(reps, || pn_forward(&m, &params).map(drop))?;
        let spectral = median_ns(reps, || spectral_fwd(&m, &plan).map(drop))?;
        for (path, median_ns) in [("elementwise", elementwise), ("spectral", spectral)] {
            table.rows.push(BenchRow { dim, kind: "sigme", path, median_ns, reps });
        }
        table.ratios.push(BenchRatio {
            dim,
            kind: "sigme",
            ratio: spectral as f64 / elementwise.max(1) as f64,
        });
    }
    Ok(table)
}

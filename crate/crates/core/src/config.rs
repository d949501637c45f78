//! Run-level configuration shared by the command-line tools.

use std::path::PathBuf;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernelmap::{default_sigma, PivotGrid, DEFAULT_Z, MAX_Z};
use crate::pn::PNConfig;
use crate::spectral::SpectralPath;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub pn: PNConfig,
    /// Pivots per coordinate; `0` drops the spatial codes entirely.
    pub z: usize,
    /// Pivot bandwidth; `None` means one pivot spacing.
    pub sigma: Option<f64>,
    pub alpha: f64,
    /// `(W, H)` layout for rank-2 inputs.
    pub grid: Option<(usize, usize)>,
    /// Pool on the spectrum instead of element-wise.
    pub spectral: Option<SpectralPath>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub bench_dims: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub epochs: usize,
    pub classes: usize,
    pub lr: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pn: PNConfig::default(),
            z: DEFAULT_Z,
            sigma: None,
            alpha: 1.0,
            grid: None,
            spectral: None,
            input: None,
            output: None,
            bench_dims: vec![16, 64, 128, 256, 512],
            reps: 5,
            seed: 0,
            epochs: 50,
            classes: 3,
            lr: 3e-3,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.pn.validate()?;
        if self.z == 1 || self.z > MAX_Z {
            return Err(Error::Config(format!("Z must be 0 or in 2..={MAX_Z}, got {}", self.z)));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma must be positive, got {s}")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if let Some((w, h)) = self.grid {
            if w == 0 || h == 0 {
                return Err(Error::Config(format!("grid {w}x{h} is empty")));
            }
        }
        if let Some(&d) = self.bench_dims.iter().find(|&&d| !(16..=4096).contains(&d)) {
            return Err(Error::Config(format!("benchmark dims must lie in [16, 4096], got {d}")));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be nonnegative, got {}", self.lr)));
        }
        Ok(())
    }

    /// Pivot grid for the spatial codes, or `None` when `Z = 0`.
    pub fn pivot_grid(&self) -> Result<Option<PivotGrid>> {
        if self.z == 0 {
            return Ok(None);
        }
        PivotGrid::new(self.z, self.sigma.unwrap_or_else(|| default_sigma(self.z))).map(Some)
    }

    /// Length `Z' = 2Z` of the spatial code appended to each feature.
    pub fn code_dim(&self) -> usize {
        2 * self.z
    }
}

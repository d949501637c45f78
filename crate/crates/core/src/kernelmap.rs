//! Gaussian RBF feature maps over equally spaced pivots, used to encode the
//! spatial coordinates of feature-map locations.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const PIVOT_START: f64 = -0.2;
pub const PIVOT_END: f64 = 1.2;
pub const DEFAULT_Z: usize = 5;
pub const MAX_Z: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct PivotGrid {
    pivots: Vec<f64>,
    sigma: f64,
}

/// `[−0.2 : 1.4/(Z−1) : 1.2]`.
pub fn make_pivots(z: usize) -> Result<Vec<f64>> {
    if !(2..=MAX_Z).contains(&z) {
        return Err(Error::Config(format!("pivot count Z must be in 2..={MAX_Z}, got {z}")));
    }
    let span = PIVOT_END - PIVOT_START;
    Ok((0..z)
        .map(|i| PIVOT_START + span * i as f64 / (z - 1) as f64)
        .collect())
}

/// Pivot spacing `1.4/(Z−1)`, the default bandwidth.
pub fn default_sigma(z: usize) -> f64 {
    (PIVOT_END - PIVOT_START) / (z.max(2) - 1) as f64
}

impl PivotGrid {
    pub fn new(z: usize, sigma: f64) -> Result<Self> {
        PivotGrid::from_pivots(make_pivots(z)?, sigma)
    }

    /// Grid with the default bandwidth of one pivot spacing.
    pub fn with_default_sigma(z: usize) -> Result<Self> {
        PivotGrid::new(z, default_sigma(z))
    }

    pub fn from_pivots(pivots: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("bandwidth sigma must be positive, got {sigma}")));
        }
        if pivots.len() < 2 || pivots.len() > MAX_Z {
            return Err(Error::Config(format!("pivot count must be in 2..={MAX_Z}")));
        }
        let step = pivots[1] - pivots[0];
        let uniform = pivots
            .windows(2)
            .all(|w| w[1] > w[0] && ((w[1] - w[0]) - step).abs() <= 1e-12);
        if !uniform {
            return Err(Error::Config("pivots must be strictly increasing and equally spaced".into()));
        }
        Ok(PivotGrid { pivots, sigma })
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.pivots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pivots.is_empty()
    }

    /// Shifts every pivot by `delta`.
    pub fn translated(&self, delta: f64) -> PivotGrid {
        PivotGrid {
            pivots: self.pivots.iter().map(|p| p + delta).collect(),
            sigma: self.sigma,
        }
    }
}

/// Entry `z` is `exp(−(x − ζ_z)² / σ²)`, a Gaussian of bandwidth `σ/√2`.
pub fn feature_map(x: f64, grid: &PivotGrid) -> Vec<f64> {
    let inv = 1.0 / (grid.sigma * grid.sigma);
    grid.pivots
        .iter()
        .map(|&p| {
            let d = x - p;
            (-d * d * inv).exp()
        })
        .collect()
}

/// `G_σ(x − y) = exp(−(x − y)² / 2σ²)`.
pub fn rbf(x: f64, y: f64, sigma: f64) -> f64 {
    let d = x - y;
    (-d * d / (2.0 * sigma * sigma)).exp()
}

/// Encoded location `α·[φ(x/(W−1)); φ(y/(H−1))]`, length `2Z`.
///
/// With `α = 0` the encoding is disabled and the zero vector is returned
/// without normalizing the coordinates, so single-pixel maps are allowed.
pub fn encode_spatial(x: usize, y: usize, width: usize, height: usize, alpha: f64, grid: &PivotGrid) -> Result<Vec<f64>> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be nonnegative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(vec![0.0; 2 * grid.len()]);
    }
    if width < 2 || height < 2 {
        return Err(Error::Config(format!(
            "spatial encoding needs a map of at least 2x2, got {width}x{height}"
        )));
    }
    if x >= width || y >= height {
        return Err(Error::Config(format!("location ({x},{y}) outside {width}x{height} map")));
    }
    let nx = x as f64 / (width - 1) as f64;
    let ny = y as f64 / (height - 1) as f64;
    let mut out = feature_map(nx, grid);
    out.extend(feature_map(ny, grid));
    out.iter_mut().for_each(|v| *v *= alpha);
    Ok(out)
}

/// Spatial codes for `n` columns laid out row-major on a `width × height`
/// grid, repeating once per patch when `n` is a multiple of `width·height`.
/// Returns a `2Z × n` matrix.
pub fn encode_grid(n: usize, width: usize, height: usize, alpha: f64, grid: &PivotGrid) -> Result<Matrix> {
    let cells = width * height;
    if cells == 0 || n % cells != 0 {
        return Err(Error::Dimension(format!(
            "{n} feature columns do not tile a {width}x{height} grid"
        )));
    }
    let zp = 2 * grid.len();
    let mut codes = Matrix::zeros(zp, n);
    for col in 0..n {
        let cell = col % cells;
        let code = encode_spatial(cell % width, cell / width, width, height, alpha, grid)?;
        for (r, v) in code.into_iter().enumerate() {
            codes[(r, col)] = v;
        }
    }
    Ok(codes)
}

/// Result of fitting `c·⟨φ(x), φ(y)⟩ ≈ G_σ(x − y)` on a uniform grid over `[0, 1]²`.
#[derive(Clone, Copy, Debug)]
pub struct LinearizationFit {
    /// Least-squares scale.
    pub c_lsq: f64,
    pub max_err_lsq: f64,
    /// Scale minimizing the maximum pointwise error.
    pub c_minimax: f64,
    pub max_err_minimax: f64,
}

/// Measures how well the pivot feature map linearizes the RBF kernel of
/// bandwidth `grid.sigma()` on an `points × points` grid.
pub fn linearization_error(grid: &PivotGrid, points: usize) -> LinearizationFit {
    let xs: Vec<f64> = (0..points)
        .map(|i| i as f64 / (points.max(2) - 1) as f64)
        .collect();
    let maps: Vec<Vec<f64>> = xs.iter().map(|&x| feature_map(x, grid)).collect();
    let mut pairs = Vec::with_capacity(points * points);
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            let k: f64 = maps[i].iter().zip(&maps[j]).map(|(a, b)| a * b).sum();
            pairs.push((k, rbf(x, y, grid.sigma)));
        }
    }
    let (kg, kk) = pairs
        .iter()
        .fold((0.0, 0.0), |(kg, kk), &(k, g)| (kg + k * g, kk + k * k));
    let c_lsq = kg / kk;
    let max_err = |c: f64| pairs.iter().fold(0.0f64, |m, &(k, g)| m.max((c * k - g).abs()));

    // max_err is convex in c; golden-section search around the LSQ value.
    let (mut lo, mut hi) = (0.5 * c_lsq, 1.5 * c_lsq);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (max_err(a), max_err(b));
    for _ in 0..100 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = max_err(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = max_err(b);
        }
    }
    let c_minimax = 0.5 * (lo + hi);
    LinearizationFit {
        c_lsq,
        max_err_lsq: max_err(c_lsq),
        c_minimax,
        max_err_minimax: max_err(c_minimax),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pivots_three_and_two() {
        let p = make_pivots(3).unwrap();
        assert!((p[0] + 0.2).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15 && (p[2] - 1.2).abs() < 1e-15);
        let p = make_pivots(2).unwrap();
        assert!((p[0] + 0.2).abs() < 1e-15 && (p[1] - 1.2).abs() < 1e-15);
    }

    #[test]
    fn pivots_eight_step_point_two() {
        let p = make_pivots(8).unwrap();
        for (i, v) in p.iter().enumerate() {
            assert!((v - (-0.2 + 0.2 * i as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn pivot_count_validated() {
        assert!(matches!(make_pivots(1), Err(Error::Config(_))));
        assert!(matches!(make_pivots(65), Err(Error::Config(_))));
        assert!(PivotGrid::new(4, 0.0).is_err());
        assert!(PivotGrid::new(4, -1.0).is_err());
    }

    #[test]
    fn feature_map_peaks_at_pivot() {
        let g = PivotGrid::new(5, 0.3).unwrap();
        let f = feature_map(g.pivots()[0], &g);
        assert_eq!(f[0], 1.0);
        assert!(f.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn feature_map_symmetric_between_pivots() {
        let g = PivotGrid::new(5, 0.3).unwrap();
        let mid = 0.5 * (g.pivots()[1] + g.pivots()[2]);
        let f = feature_map(mid, &g);
        assert!((f[1] - f[2]).abs() < 1e-15);
    }

    #[test]
    fn feature_map_translation_invariant() {
        let g = PivotGrid::new(6, 0.25).unwrap();
        let shifted = g.translated(0.375);
        let a = feature_map(0.3, &g);
        let b = feature_map(0.675, &shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn encode_spatial_disabled_by_zero_alpha() {
        let g = PivotGrid::with_default_sigma(4).unwrap();
        assert_eq!(encode_spatial(0, 0, 1, 1, 0.0, &g).unwrap(), vec![0.0; 8]);
        assert!(encode_spatial(0, 0, 1, 5, 1.0, &g).is_err());
    }

    #[test]
    fn encode_spatial_endpoint_normalization() {
        let g = PivotGrid::new(3, 0.5).unwrap();
        let left = encode_spatial(0, 0, 2, 2, 1.0, &g).unwrap();
        assert_eq!(&left[..3], &feature_map(0.0, &g)[..]);
        let right = encode_spatial(1, 1, 2, 2, 1.0, &g).unwrap();
        assert_eq!(&right[..3], &feature_map(1.0, &g)[..]);
        assert_eq!(&right[3..], &feature_map(1.0, &g)[..]);
    }

    #[test]
    fn encode_spatial_midpoint_values() {
        let g = PivotGrid::new(3, 0.5).unwrap();
        let code = encode_spatial(1, 0, 3, 2, 1.0, &g).unwrap();
        let e = (-0.49f64 / 0.25).exp();
        assert!((code[0] - e).abs() < 1e-15);
        assert!((code[1] - 1.0).abs() < 1e-15);
        assert!((code[2] - e).abs() < 1e-15);
    }

    #[test]
    fn encode_spatial_linear_in_alpha() {
        let g = PivotGrid::new(5, 0.2).unwrap();
        let a = encode_spatial(2, 3, 7, 5, 0.7, &g).unwrap();
        let b = encode_spatial(2, 3, 7, 5, 1.4, &g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(2.0 * x, *y);
        }
        assert!(b.iter().all(|&v| (0.0..=1.4).contains(&v)));
    }

    #[test]
    fn encode_grid_tiles_patches() {
        let g = PivotGrid::new(3, 0.5).unwrap();
        let codes = encode_grid(8, 2, 2, 1.0, &g).unwrap();
        assert_eq!(codes.shape(), (6, 8));
        for r in 0..6 {
            assert_eq!(codes[(r, 1)], codes[(r, 5)]);
        }
        assert!(encode_grid(7, 2, 2, 1.0, &g).is_err());
    }

    #[test]
    fn linearization_z10() {
        let g = PivotGrid::new(10, 0.35).unwrap();
        let fit = linearization_error(&g, 100);
        assert!(fit.max_err_lsq < 0.05, "{fit:?}");
        assert!(fit.max_err_minimax <= fit.max_err_lsq + 1e-12);
    }
}

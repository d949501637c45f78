use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

use sopool::aggregate::CoocMatrix;
use sopool::config::RunConfig;
use sopool::linalg::{Matrix, SymMatrix};
use sopool::pipeline::{pool_backward, pool_forward};
use sopool::pn::{PNConfig, PoolKind};
use sopool::probmodel::{self, BernoulliPool};
use sopool::spectral::{spectral_fwd, SpectralKind, SpectralPath, SpectralPlan};
use sopool::tensorfile::{DType, TensorFile};
use sopool::verify::{cmd_verify, VerifyOptions};
use sopool::Error;

type Rows = Vec<Vec<f64>>;

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        3 => PyIOError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

fn matrix(rows: &Rows) -> PyResult<Matrix> {
    Matrix::from_rows(rows).map_err(to_py)
}

fn sym_matrix(rows: &Rows) -> PyResult<SymMatrix> {
    SymMatrix::new(matrix(rows)?).map_err(to_py)
}

/// Pooling configuration. `spectral` is None, "eigen" or "closed-form".
#[pyclass(name = "PoolConfig", from_py_object)]
#[derive(Clone)]
struct PyPoolConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyPoolConfig {
    #[new]
    #[pyo3(signature = (
        kind = "sigme", gamma = 0.5, eta = 20.0, eta_prime = 20.0, gamma_prime = 10.0,
        lambda_ = 1e-6, beta = 0.0, kappa = 1e-3, alpha = 1.0, z = 5, sigma = None,
        trace_comp = false, trace_comp_exponent = 0.5, residual = false, spectral = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        kind: &str,
        gamma: f64,
        eta: f64,
        eta_prime: f64,
        gamma_prime: f64,
        lambda_: f64,
        beta: f64,
        kappa: f64,
        alpha: f64,
        z: usize,
        sigma: Option<f64>,
        trace_comp: bool,
        trace_comp_exponent: f64,
        residual: bool,
        spectral: Option<&str>,
    ) -> PyResult<Self> {
        let spectral = match spectral {
            None => None,
            Some("eigen") => Some(SpectralPath::Eigen),
            Some("closed-form") => Some(SpectralPath::ClosedForm),
            Some(other) => {
                return Err(PyValueError::new_err(format!(
                    "spectral must be 'eigen' or 'closed-form', got '{other}'"
                )))
            }
        };
        let inner = RunConfig {
            pn: PNConfig {
                kind: kind.parse::<PoolKind>().map_err(to_py)?,
                gamma,
                eta,
                gamma_prime,
                eta_prime,
                lambda: lambda_,
                beta,
                kappa,
                trace_comp,
                trace_comp_exponent,
                residual,
            },
            z,
            sigma,
            alpha,
            spectral,
            ..RunConfig::default()
        };
        inner.validate().map_err(to_py)?;
        Ok(PyPoolConfig { inner })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.pn.kind.name()
    }

    /// Side length `d + 2Z` of the pooled matrix for `d` input features.
    fn pooled_dim(&self, feature_dim: usize) -> usize {
        feature_dim + self.inner.code_dim()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "PoolConfig(kind='{}', beta={}, alpha={}, z={}, spectral={:?})",
            self.inner.pn.kind, self.inner.pn.beta, self.inner.alpha, self.inner.z, self.inner.spectral
        )
    }
}

/// Pools a `d × (W·H)` feature map (columns row-major over the grid).
#[pyfunction]
fn pool(features: Rows, grid: (usize, usize), config: &PyPoolConfig) -> PyResult<Rows> {
    let out = pool_forward(&matrix(&features)?, grid, &config.inner).map_err(to_py)?;
    Ok(out.psi.to_rows())
}

/// Returns `(Ψ, dℓ/dfeatures)` for the loss `⟨upstream, Ψ⟩`.
#[pyfunction]
fn pool_with_grad(features: Rows, grid: (usize, usize), upstream: Rows, config: &PyPoolConfig) -> PyResult<(Rows, Rows)> {
    let out = pool_forward(&matrix(&features)?, grid, &config.inner).map_err(to_py)?;
    let grad = pool_backward(&out, &sym_matrix(&upstream)?, &config.inner).map_err(to_py)?;
    Ok((out.psi.to_rows(), grad.to_rows()))
}

/// Element-wise power normalization of a co-occurrence matrix.
#[pyfunction]
fn normalize(m: Rows, config: &PyPoolConfig) -> PyResult<Rows> {
    let cooc = CoocMatrix::from_sym(sym_matrix(&m)?);
    Ok(sopool::pn::pn_forward(&cooc, &config.inner.pn).map_err(to_py)?.to_rows())
}

/// Spectral power normalization; `path` is "eigen" or "closed-form".
#[pyfunction]
#[pyo3(signature = (m, kind, path = "eigen", config = None))]
fn spectral_normalize(m: Rows, kind: &str, path: &str, config: Option<&PyPoolConfig>) -> PyResult<Rows> {
    let kind: SpectralKind = kind.parse().map_err(to_py)?;
    let path = match path {
        "eigen" => SpectralPath::Eigen,
        "closed-form" => SpectralPath::ClosedForm,
        other => return Err(PyValueError::new_err(format!("unknown path '{other}'"))),
    };
    let params = config.map_or_else(PNConfig::default, |c| c.inner.pn);
    let plan = SpectralPlan::new(kind, path, params).map_err(to_py)?;
    let cooc = CoocMatrix::from_sym(sym_matrix(&m)?);
    Ok(spectral_fwd(&cooc, &plan).map_err(to_py)?.to_rows())
}

/// Eigenvalues (descending) and eigenvector columns of a symmetric matrix.
#[pyfunction]
fn sym_eig(m: Rows) -> PyResult<(Vec<f64>, Rows)> {
    let eig = sopool::linalg::sym_eig(&sym_matrix(&m)?).map_err(to_py)?;
    Ok((eig.values, eig.vectors.to_rows()))
}

#[pyfunction]
fn binom_at_least_one(n: u32, p: f64) -> PyResult<f64> {
    Ok(probmodel::binom_at_least_one(&BernoulliPool::binomial(n, p).map_err(to_py)?))
}

#[pyfunction]
fn multinom_at_least_one(n: u32, p: f64, q: f64, s: f64) -> PyResult<f64> {
    probmodel::multinom_at_least_one(&BernoulliPool::new(n, p, q, s).map_err(to_py)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (n, p, q, s, trials, seed = 0))]
fn simulate_cooc(n: u32, p: f64, q: f64, s: f64, trials: u64, seed: u64) -> PyResult<f64> {
    probmodel::simulate_cooc(&BernoulliPool::new(n, p, q, s).map_err(to_py)?, trials, seed).map_err(to_py)
}

/// Runs verification suites; returns one JSON string per suite.
#[pyfunction]
#[pyo3(signature = (suite = None, seed = 0, instances = 4))]
fn verify(suite: Option<String>, seed: u64, instances: usize) -> PyResult<Vec<String>> {
    let opts = VerifyOptions { suite, break_sign: false, seed, instances };
    let reports = cmd_verify(&PNConfig::default(), &opts).map_err(to_py)?;
    reports
        .iter()
        .map(|r| serde_json::to_string(r).map_err(|e| PyValueError::new_err(e.to_string())))
        .collect()
}

/// Reads a SOP1 tensor file: `(dims, flat row-major values)`.
#[pyfunction]
fn read_tensor(path: PathBuf) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let t = TensorFile::read(path).map_err(to_py)?;
    Ok((t.dims().to_vec(), t.data().to_vec()))
}

#[pyfunction]
#[pyo3(signature = (path, dims, values, dtype = "f64"))]
fn write_tensor(path: PathBuf, dims: Vec<usize>, values: Vec<f64>, dtype: &str) -> PyResult<()> {
    let dtype = match dtype {
        "f32" => DType::F32,
        "f64" => DType::F64,
        other => return Err(PyValueError::new_err(format!("dtype must be 'f32' or 'f64', got '{other}'"))),
    };
    TensorFile::new(dtype, dims, values).and_then(|t| t.write(path)).map_err(to_py)
}

#[pymodule]
fn pysopool(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPoolConfig>()?;
    m.add_function(wrap_pyfunction!(pool, m)?)?;
    m.add_function(wrap_pyfunction!(pool_with_grad, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(sym_eig, m)?)?;
    m.add_function(wrap_pyfunction!(binom_at_least_one, m)?)?;
    m.add_function(wrap_pyfunction!(multinom_at_least_one, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_cooc, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    Ok(())
}

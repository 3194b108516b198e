//! Python bindings for the subspace estimation toolkit.
//!
//! Exposes the orthonormal-basis type, the Grassmann geometry primitives,
//! the linear-model Gibbs chain and the estimator family. Matrices cross
//! the boundary as row-major nested lists.

use mmsd_core::error::Error;
use mmsd_core::estimator;
use mmsd_core::geometry;
use mmsd_core::model::{self, ChainOutput, LinearModelSpec, PriorKind};
use mmsd_core::sampling::{sample_truncated_gamma, TruncatedGammaParams};
use mmsd_core::seeding::rng_from_seed;
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py_err(err: Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(PyValueError::new_err("matrix must have at least one row"));
    }
    let p = rows[0].len();
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows must be nonempty and equal length"));
    }
    let mut m = DMatrix::zeros(n, p);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn parse_prior(name: &str) -> PyResult<PriorKind> {
    name.parse().map_err(to_py_err)
}

/// An N x p matrix with orthonormal columns.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Basis {
    inner: geometry::OrthonormalBasis,
}

#[pymethods]
impl Basis {
    /// Wraps a row-major matrix, validating orthonormality.
    #[staticmethod]
    fn from_matrix(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = matrix_from_rows(rows)?;
        geometry::OrthonormalBasis::new(m)
            .map(|inner| Basis { inner })
            .map_err(to_py_err)
    }

    /// The canonical basis `[I_p 0]ᵀ`.
    #[staticmethod]
    fn identity_block(n: usize, p: usize) -> PyResult<Self> {
        geometry::OrthonormalBasis::identity_block(n, p)
            .map(|inner| Basis { inner })
            .map_err(to_py_err)
    }

    /// A uniformly (Haar) distributed basis for the given seed.
    #[staticmethod]
    fn uniform(n: usize, p: usize, seed: u64) -> PyResult<Self> {
        let mut rng = rng_from_seed(seed);
        geometry::uniform_stiefel(n, p, &mut rng)
            .map(|inner| Basis { inner })
            .map_err(to_py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    /// Row-major entries.
    fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.matrix())
    }

    /// The projection matrix onto the spanned subspace.
    fn projector(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.projector())
    }

    fn __repr__(&self) -> String {
        format!("Basis(n={}, p={})", self.inner.n(), self.inner.p())
    }
}

/// Retained samples of a posterior Gibbs chain.
#[pyclass(frozen)]
struct Chain {
    inner: ChainOutput,
}

#[pymethods]
impl Chain {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Minimum mean-square-distance estimate: principal eigenvectors of the
    /// average projector.
    fn mmsd(&self) -> PyResult<Basis> {
        estimator::mmsd_from_chain(&self.inner)
            .map(|inner| Basis { inner })
            .map_err(to_py_err)
    }

    /// Orthonormalized posterior mean of the basis; raises if the mean is
    /// numerically rank-deficient.
    fn mmse(&self) -> PyResult<Basis> {
        estimator::mmse_from_chain(&self.inner)
            .map(|inner| Basis { inner })
            .map_err(to_py_err)
    }

    /// Retained sample of largest log-density.
    fn map(&self) -> PyResult<Basis> {
        estimator::map_from_chain(&self.inner)
            .map(|inner| Basis { inner })
            .map_err(to_py_err)
    }

    /// Unnormalized log-density trace of the retained samples.
    fn log_density(&self) -> Vec<f64> {
        self.inner.log_density().to_vec()
    }
}

/// Orthonormal factor of the polar decomposition of a full-rank matrix.
#[pyfunction]
fn orthonormalize(rows: Vec<Vec<f64>>) -> PyResult<Basis> {
    let m = matrix_from_rows(rows)?;
    geometry::orthonormalize(&m)
        .map(|inner| Basis { inner })
        .map_err(to_py_err)
}

/// Principal angles between two subspaces, ascending, in radians.
#[pyfunction]
fn principal_angles(u1: &Basis, u2: &Basis) -> PyResult<Vec<f64>> {
    geometry::principal_angles(&u1.inner, &u2.inner)
        .map(|a| a.angles().to_vec())
        .map_err(to_py_err)
}

/// Squared projector distance between two subspaces.
#[pyfunction]
fn squared_distance(u1: &Basis, u2: &Basis) -> PyResult<f64> {
    geometry::squared_distance(&u1.inner, &u2.inner).map_err(to_py_err)
}

/// Fraction of energy of `u` in the span of `ubar`.
#[pyfunction]
fn afe(u: &Basis, ubar: &Basis) -> PyResult<f64> {
    geometry::afe(&u.inner, &ubar.inner).map_err(to_py_err)
}

/// Basis of the `p` largest eigenvalues of a symmetric matrix.
#[pyfunction]
fn top_p_eigvecs(rows: Vec<Vec<f64>>, p: usize) -> PyResult<Basis> {
    let m = matrix_from_rows(rows)?;
    geometry::top_p_eigvecs(&m, p)
        .map(|inner| Basis { inner })
        .map_err(to_py_err)
}

/// Simulates snapshots `Y = U S + N` and returns them row-major.
#[pyfunction]
fn generate_linear_data(
    u: &Basis,
    sigma2_s: f64,
    sigma2_n: f64,
    k: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let mut rng = rng_from_seed(seed);
    model::generate_linear_data(&u.inner, sigma2_s, sigma2_n, k, &mut rng)
        .map(|m| matrix_to_rows(&m))
        .map_err(to_py_err)
}

/// Closed-form MMSD estimate for the linear model with a Bingham prior.
#[pyfunction]
fn mmsd_closed_form(
    y_rows: Vec<Vec<f64>>,
    ubar: &Basis,
    kappa: f64,
    sigma2_n: f64,
) -> PyResult<Basis> {
    let y = matrix_from_rows(y_rows)?;
    let spec = LinearModelSpec::new(ubar.inner.clone(), kappa, sigma2_n, PriorKind::Bingham)
        .map_err(to_py_err)?;
    estimator::mmsd_closed_form(&y, &spec)
        .map(|inner| Basis { inner })
        .map_err(to_py_err)
}

/// Runs the linear-model Gibbs chain (`prior` is "bingham" or "vmf").
#[pyfunction]
#[pyo3(signature = (y_rows, ubar, kappa, sigma2_n, prior, n_bi, n_r, seed))]
#[allow(clippy::too_many_arguments)]
fn run_lm_chain(
    y_rows: Vec<Vec<f64>>,
    ubar: &Basis,
    kappa: f64,
    sigma2_n: f64,
    prior: &str,
    n_bi: usize,
    n_r: usize,
    seed: u64,
) -> PyResult<Chain> {
    let y = matrix_from_rows(y_rows)?;
    let spec = LinearModelSpec::new(ubar.inner.clone(), kappa, sigma2_n, parse_prior(prior)?)
        .map_err(to_py_err)?;
    let mut rng = rng_from_seed(seed);
    model::run_lm_chain(&y, &spec, n_bi, n_r, &mut rng)
        .map(|inner| Chain { inner })
        .map_err(to_py_err)
}

/// Principal left singular vectors of `y` (padded deterministically when
/// fewer than `p` snapshots are available).
#[pyfunction]
fn svd_estimator(y_rows: Vec<Vec<f64>>, p: usize) -> PyResult<Basis> {
    let y = matrix_from_rows(y_rows)?;
    estimator::svd_estimator(&y, p)
        .map(|est| Basis { inner: est.basis })
        .map_err(to_py_err)
}

/// Draws from a gamma density with the given shape and rate, truncated to
/// `[lo, hi]`.
#[pyfunction]
fn truncated_gamma(shape: f64, rate: f64, lo: f64, hi: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let params = TruncatedGammaParams::new(shape, rate, lo, hi).map_err(to_py_err)?;
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| sample_truncated_gamma(&params, &mut rng)).collect())
}

/// Draws one basis from the Bingham or vMF prior centered on `ubar`.
#[pyfunction]
fn draw_from_prior(ubar: &Basis, kappa: f64, prior: &str, seed: u64) -> PyResult<Basis> {
    let mut rng = rng_from_seed(seed);
    model::draw_from_prior(
        parse_prior(prior)?,
        &ubar.inner,
        kappa,
        model::PRIOR_BURNIN_DEFAULT,
        &mut rng,
    )
    .map(|inner| Basis { inner })
    .map_err(to_py_err)
}

#[pymodule]
fn mmsd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Basis>()?;
    m.add_class::<Chain>()?;
    m.add_function(wrap_pyfunction!(orthonormalize, m)?)?;
    m.add_function(wrap_pyfunction!(principal_angles, m)?)?;
    m.add_function(wrap_pyfunction!(squared_distance, m)?)?;
    m.add_function(wrap_pyfunction!(afe, m)?)?;
    m.add_function(wrap_pyfunction!(top_p_eigvecs, m)?)?;
    m.add_function(wrap_pyfunction!(generate_linear_data, m)?)?;
    m.add_function(wrap_pyfunction!(mmsd_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(run_lm_chain, m)?)?;
    m.add_function(wrap_pyfunction!(svd_estimator, m)?)?;
    m.add_function(wrap_pyfunction!(truncated_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(draw_from_prior, m)?)?;
    Ok(())
}

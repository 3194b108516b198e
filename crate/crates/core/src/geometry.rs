//! Subspace geometry primitives.
//!
//! A point of the Grassmann manifold `G_{N,p}` is represented by an
//! [`OrthonormalBasis`], an `N x p` matrix with orthonormal columns. Two
//! bases describe the same point when they differ by a right orthogonal
//! factor, so every quantity exposed here that is meant to be a function of
//! the *subspace* (distance, fraction of energy) depends on the basis only
//! through its projector `U Uᵀ`.
//!
//! The squared distance used throughout the crate is the squared Frobenius
//! norm of the projector difference,
//!
//! ```text
//! d²(U₁, U₂) = ‖U₁U₁ᵀ − U₂U₂ᵀ‖²_F = Σₖ sin² θₖ = 2 (p − tr U₁ᵀU₂U₂ᵀU₁)
//! ```
//!
//! where `θₖ` are the principal angles between the subspaces.
//!
//! Spectral routines fix a deterministic sign convention (the entry of
//! largest magnitude of each eigenvector is positive) and break eigenvalue
//! ties by the original index so estimates are reproducible.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Per-entry tolerance for orthonormality checks.
pub const ORTHO_TOL: f64 = 1e-12;

/// Relative threshold under which singular/eigen values count as zero.
pub const RANK_REL_TOL: f64 = 1e-10;

/// An `N x p` real matrix with orthonormal columns, `1 <= p <= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    data: DMatrix<f64>,
}

impl OrthonormalBasis {
    /// Wraps a matrix after checking `Xᵀ X = I` to [`ORTHO_TOL`] per entry.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        let (n, p) = (data.nrows(), data.ncols());
        if p < 1 || p > n {
            return Err(Error::shape(format!(
                "basis must be N x p with 1 <= p <= N, got {n} x {p}"
            )));
        }
        let defect = ortho_defect(&data);
        if defect > ORTHO_TOL {
            return Err(Error::NotOrthonormal(format!(
                "max |XᵀX - I| = {defect:.3e} exceeds {ORTHO_TOL:.0e}"
            )));
        }
        Ok(Self { data })
    }

    /// Wraps a matrix known to be orthonormal by construction.
    pub(crate) fn new_unchecked(data: DMatrix<f64>) -> Self {
        debug_assert!(
            ortho_defect(&data) <= 1e-9,
            "new_unchecked got a non-orthonormal matrix (defect {:.3e})",
            ortho_defect(&data)
        );
        Self { data }
    }

    /// The canonical basis `[I_p 0]ᵀ`.
    pub fn identity_block(n: usize, p: usize) -> Result<Self> {
        if p < 1 || p > n {
            return Err(Error::shape(format!(
                "identity block needs 1 <= p <= N, got N={n}, p={p}"
            )));
        }
        let mut m = DMatrix::zeros(n, p);
        for k in 0..p {
            m[(k, k)] = 1.0;
        }
        Ok(Self { data: m })
    }

    /// Ambient dimension `N`.
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Subspace dimension `p`.
    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// The projection matrix `X Xᵀ` onto the spanned subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.data * self.data.transpose()
    }

    /// Column `k` as an owned vector.
    pub fn column(&self, k: usize) -> DVector<f64> {
        self.data.column(k).into_owned()
    }

    /// Max-norm of `XᵀX - I`.
    pub fn ortho_defect(&self) -> f64 {
        ortho_defect(&self.data)
    }
}

fn ortho_defect(m: &DMatrix<f64>) -> f64 {
    let p = m.ncols();
    let gram = m.transpose() * m;
    let mut worst = 0.0f64;
    for i in 0..p {
        for j in 0..p {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// Principal angles between two subspaces, in `[0, π/2]`, ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles {
    angles: Vec<f64>,
}

impl PrincipalAngles {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// `Σ sin² θₖ`, i.e. the squared projector distance.
    pub fn sum_sin_sq(&self) -> f64 {
        self.angles.iter().map(|t| t.sin().powi(2)).sum()
    }
}

/// Full eigendecomposition of a symmetric matrix with values sorted
/// descending and the crate sign convention applied to each eigenvector.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// `N x N` orthonormal eigenvector matrix, columns matching `values`.
    pub vectors: DMatrix<f64>,
    /// Eigenvalues sorted descending.
    pub values: DVector<f64>,
}

fn check_same_shape(u1: &OrthonormalBasis, u2: &OrthonormalBasis) -> Result<()> {
    if u1.n() != u2.n() || u1.p() != u2.p() {
        return Err(Error::shape(format!(
            "bases are {}x{} and {}x{}",
            u1.n(),
            u1.p(),
            u2.n(),
            u2.p()
        )));
    }
    Ok(())
}

/// Orthonormal factor of the polar decomposition of `m`.
///
/// Returns the closest matrix with orthonormal columns in Frobenius norm;
/// in particular an already-orthonormal input is returned unchanged (up to
/// rounding) and the result always spans `range(m)`.
pub fn orthonormalize(m: &DMatrix<f64>) -> Result<OrthonormalBasis> {
    let (n, p) = (m.nrows(), m.ncols());
    if p < 1 || p > n {
        return Err(Error::shape(format!(
            "cannot orthonormalize a {n} x {p} matrix"
        )));
    }
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if smax <= 0.0 || sv.min() < RANK_REL_TOL * smax {
        return Err(Error::RankDeficient(format!(
            "smallest singular value {:.3e} below {RANK_REL_TOL:.0e} x {:.3e}",
            sv.min(),
            smax
        )));
    }
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    Ok(OrthonormalBasis::new_unchecked(u * vt))
}

/// Principal angles `θₖ = arccos σₖ` from the singular values of `U₂ᵀU₁`.
pub fn principal_angles(
    u1: &OrthonormalBasis,
    u2: &OrthonormalBasis,
) -> Result<PrincipalAngles> {
    check_same_shape(u1, u2)?;
    let cross = u2.matrix().transpose() * u1.matrix();
    let svd = cross.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    Ok(PrincipalAngles { angles })
}

/// Squared projector distance `2 (p − tr U₁ᵀU₂U₂ᵀU₁)`.
pub fn squared_distance(u1: &OrthonormalBasis, u2: &OrthonormalBasis) -> Result<f64> {
    check_same_shape(u1, u2)?;
    let cross = u2.matrix().transpose() * u1.matrix();
    let d2 = 2.0 * (u1.p() as f64 - cross.norm_squared());
    Ok(d2.max(0.0))
}

/// Fraction of energy of `u` lying in `range(ubar)`: `tr(uᵀ ubar ubarᵀ u)/p`.
///
/// Equals `1 − d²(u, ubar)/(2p)`; averaging over draws or trials is the
/// caller's job.
pub fn afe(u: &OrthonormalBasis, ubar: &OrthonormalBasis) -> Result<f64> {
    check_same_shape(u, ubar)?;
    let cross = ubar.matrix().transpose() * u.matrix();
    Ok((cross.norm_squared() / u.p() as f64).clamp(0.0, 1.0))
}

/// Flips each column so its entry of largest magnitude is positive.
///
/// Ties pick the first largest index, making the convention total.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Eigendecomposition of `(s + sᵀ)/2`, sorted descending with ties broken by
/// the original index and the column sign convention applied.
pub fn spectral_decomposition(s: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = s.nrows();
    if n == 0 || s.ncols() != n {
        return Err(Error::shape(format!(
            "expected a nonempty square matrix, got {} x {}",
            n,
            s.ncols()
        )));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original index order within ties.
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = DVector::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        values[dst] = eig.eigenvalues[src];
    }
    fix_column_signs(&mut vectors);
    Ok(SpectralDecomposition { vectors, values })
}

/// Basis of the invariant subspace of the `p` largest eigenvalues of `s`.
///
/// `s` is symmetrized first; ordering and signs follow
/// [`spectral_decomposition`].
pub fn top_p_eigvecs(s: &DMatrix<f64>, p: usize) -> Result<OrthonormalBasis> {
    let n = s.nrows();
    if p < 1 || p > n {
        return Err(Error::arg(format!(
            "p must satisfy 1 <= p <= {n}, got {p}"
        )));
    }
    let dec = spectral_decomposition(s)?;
    Ok(OrthonormalBasis::new_unchecked(
        dec.vectors.columns(0, p).into_owned(),
    ))
}

/// Orthonormal basis of `range(x)⊥` for a matrix `x` with orthonormal
/// columns; an empty `x` yields the identity.
///
/// Computed as the top eigenvectors of the complementary projector
/// `I − x xᵀ`, whose unit eigenvalues have multiplicity `N − k`.
pub fn null_space_basis(x: &DMatrix<f64>) -> Result<OrthonormalBasis> {
    let (n, k) = (x.nrows(), x.ncols());
    if n == 0 || k >= n {
        return Err(Error::arg(format!(
            "complement of {k} columns in dimension {n} is empty"
        )));
    }
    if k == 0 {
        return Ok(OrthonormalBasis::new_unchecked(DMatrix::identity(n, n)));
    }
    let defect = ortho_defect(x);
    if defect > 1e-10 {
        return Err(Error::NotOrthonormal(format!(
            "null_space_basis input has defect {defect:.3e}"
        )));
    }
    let proj = DMatrix::identity(n, n) - x * x.transpose();
    let dec = spectral_decomposition(&proj)?;
    Ok(OrthonormalBasis::new_unchecked(
        dec.vectors.columns(0, n - k).into_owned(),
    ))
}

/// Draws a basis uniformly (Haar) on the set of `n x p` orthonormal
/// matrices, by QR of an i.i.d. standard normal matrix with the R diagonal
/// forced positive.
pub fn uniform_stiefel(n: usize, p: usize, rng: &mut impl Rng) -> Result<OrthonormalBasis> {
    if p < 1 || p > n {
        return Err(Error::arg(format!(
            "uniform_stiefel needs 1 <= p <= n, got n={n}, p={p}"
        )));
    }
    let mut g = DMatrix::<f64>::zeros(n, p);
    for j in 0..p {
        for i in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            g[(i, j)] = z;
        }
    }
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(OrthonormalBasis::new_unchecked(q))
}

/// Re-orthonormalizes `m` in place by modified Gram-Schmidt, preserving
/// column directions; used to cancel floating-point drift in long chains.
pub(crate) fn gram_schmidt_in_place(m: &mut DMatrix<f64>) -> Result<()> {
    let (n, p) = (m.nrows(), m.ncols());
    for j in 0..p {
        let mut col = m.column(j).into_owned();
        for i in 0..j {
            let prev = m.column(i);
            let dot = prev.dot(&col);
            col.axpy(-dot, &prev.into_owned(), 1.0);
        }
        let norm = col.norm();
        if norm < 1e-12 {
            return Err(Error::RankDeficient(format!(
                "column {j} collapsed during re-orthonormalization"
            )));
        }
        col /= norm;
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    Ok(())
}

//! Samplers for directional distributions.
//!
//! The matrix Bingham-von Mises-Fisher (BMF) family has density
//!
//! ```text
//! p(X) ∝ etr(Cᵀ X + Σⱼ Bⱼ Xᵀ Aⱼ X),    Xᵀ X = I,
//! ```
//!
//! with symmetric `N x N` matrices `Aⱼ`, diagonal `p x p` weights `Bⱼ` and
//! an `N x p` linear coefficient `C`. The pure Bingham density is the
//! quadratic-only case and the von Mises-Fisher density the linear-only
//! case. Sampling follows a column-wise Gibbs scheme: conditioned on the
//! other columns, column `k` lives on the unit sphere of the orthogonal
//! complement `range(X₋ₖ)⊥` and follows a *vector* BMF distribution whose
//! quadratic matrix may be rank-deficient, which happens systematically
//! here because both `Ubar Ubarᵀ` (rank p) and `Y Yᵀ` (rank ≤ K) are
//! low-rank.
//!
//! The vector sampler works in the eigenbasis of the quadratic matrix and
//! performs one exact conditional draw per coordinate: the squared
//! coordinate `θ` is drawn by rejection sampling with a `Beta(1/2, (M-1)/2)`
//! proposal (falling back to grid inversion if the envelope is too loose),
//! then the sign is drawn with odds `exp(±d√θ)`. Zero eigenvalues only
//! change the linear coefficient `aₖ` of the conditional, so no special
//! branch is needed beyond zeroing them out.
//!
//! A doubly truncated gamma sampler supports the covariance-model Gibbs
//! updates of the per-component noise-to-signal ratios.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::error::{Error, Result};
use crate::geometry::{null_space_basis, OrthonormalBasis, RANK_REL_TOL};

/// Attempt cap for rejection loops before switching to grid inversion.
const MAX_REJECTION_ATTEMPTS: usize = 10_000;

/// One weighted quadratic exponent term `tr(B Xᵀ A X)`.
#[derive(Debug, Clone)]
pub struct QuadraticTerm {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl QuadraticTerm {
    /// `a` must be symmetric to 1e-12 per entry and is symmetrized before
    /// storage. `b` holds the diagonal of the `p x p` weight matrix.
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::shape(format!(
                "quadratic matrix must be square, got {} x {}",
                n,
                a.ncols()
            )));
        }
        let asym = (&a - a.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::arg(format!(
                "quadratic matrix asymmetry {asym:.3e} exceeds 1e-12"
            )));
        }
        let a = (&a + a.transpose()) * 0.5;
        Ok(Self { a, b })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.b
    }
}

/// Parameters of a matrix BMF density: weighted quadratic terms plus a
/// linear term (all-zero for pure Bingham densities).
#[derive(Debug, Clone)]
pub struct BmfParams {
    quadratic: Vec<QuadraticTerm>,
    linear: DMatrix<f64>,
}

impl BmfParams {
    pub fn new(quadratic: Vec<QuadraticTerm>, linear: DMatrix<f64>) -> Result<Self> {
        let (n, p) = (linear.nrows(), linear.ncols());
        if n == 0 || p == 0 {
            return Err(Error::shape("linear term must be N x p with N, p >= 1"));
        }
        for (j, term) in quadratic.iter().enumerate() {
            if term.a.nrows() != n {
                return Err(Error::shape(format!(
                    "quadratic term {j} is {} x {}, ambient dimension is {n}",
                    term.a.nrows(),
                    term.a.ncols()
                )));
            }
            if term.b.len() != p {
                return Err(Error::shape(format!(
                    "quadratic term {j} has {} weights, width is {p}",
                    term.b.len()
                )));
            }
        }
        Ok(Self { quadratic, linear })
    }

    /// Pure Bingham parameters: a single quadratic term with unit weights.
    pub fn bingham(a: DMatrix<f64>, p: usize) -> Result<Self> {
        let n = a.nrows();
        let term = QuadraticTerm::new(a, DVector::from_element(p, 1.0))?;
        Self::new(vec![term], DMatrix::zeros(n, p))
    }

    /// Pure von Mises-Fisher parameters: linear term only.
    pub fn vmf(c: DMatrix<f64>) -> Result<Self> {
        Self::new(Vec::new(), c)
    }

    pub fn ambient(&self) -> usize {
        self.linear.nrows()
    }

    pub fn width(&self) -> usize {
        self.linear.ncols()
    }

    pub fn quadratic(&self) -> &[QuadraticTerm] {
        &self.quadratic
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    /// Unnormalized log-density exponent `tr(CᵀX) + Σⱼ tr(Bⱼ Xᵀ Aⱼ X)`.
    pub fn log_density_exponent(&self, x: &DMatrix<f64>) -> f64 {
        let mut acc = (self.linear.transpose() * x).trace();
        for term in &self.quadratic {
            for k in 0..self.width() {
                let col = x.column(k);
                acc += term.b[k] * (col.transpose() * &term.a * col)[(0, 0)];
            }
        }
        acc
    }
}

/// Parameters of a vector BMF density `p(x) ∝ exp(cᵀx + xᵀAx)` on the unit
/// sphere, with the eigendecomposition of `A` cached and eigenvalues below
/// the rank tolerance treated as exactly zero.
#[derive(Debug, Clone)]
pub struct VectorBmfParams {
    a_tilde: DMatrix<f64>,
    c_tilde: DVector<f64>,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
    d: DVector<f64>,
    rank: usize,
}

impl VectorBmfParams {
    pub fn new(a_tilde: DMatrix<f64>, c_tilde: DVector<f64>) -> Result<Self> {
        Self::with_rank_tol(a_tilde, c_tilde, RANK_REL_TOL)
    }

    /// As [`VectorBmfParams::new`] with an explicit relative rank tolerance
    /// (useful to force the full-rank code path in continuity checks).
    pub fn with_rank_tol(a_tilde: DMatrix<f64>, c_tilde: DVector<f64>, tol: f64) -> Result<Self> {
        let m = a_tilde.nrows();
        if m == 0 || a_tilde.ncols() != m {
            return Err(Error::shape(format!(
                "quadratic matrix must be square, got {} x {}",
                m,
                a_tilde.ncols()
            )));
        }
        if c_tilde.len() != m {
            return Err(Error::shape(format!(
                "linear coefficient has length {}, expected {m}",
                c_tilde.len()
            )));
        }
        let asym = (&a_tilde - a_tilde.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::arg(format!(
                "quadratic matrix asymmetry {asym:.3e} exceeds 1e-12"
            )));
        }
        let sym = (&a_tilde + a_tilde.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        // Order by magnitude so zeroed eigenvalues form a suffix.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .abs()
                .total_cmp(&eig.eigenvalues[i].abs())
        });
        let mut eigvecs = DMatrix::zeros(m, m);
        let mut eigvals = DVector::zeros(m);
        for (dst, &src) in order.iter().enumerate() {
            eigvecs.set_column(dst, &eig.eigenvectors.column(src));
            eigvals[dst] = eig.eigenvalues[src];
        }
        let max_abs = eigvals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let mut rank = 0;
        for i in 0..m {
            if max_abs > 0.0 && eigvals[i].abs() > tol * max_abs {
                rank = i + 1;
            } else {
                eigvals[i] = 0.0;
            }
        }
        let d = eigvecs.transpose() * &c_tilde;
        Ok(Self {
            a_tilde: sym,
            c_tilde,
            eigvecs,
            eigvals,
            d,
            rank,
        })
    }

    pub fn dim(&self) -> usize {
        self.a_tilde.nrows()
    }

    /// Count of eigenvalues above the rank tolerance.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.a_tilde
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.c_tilde
    }
}

/// `ln(2 cosh t)` without overflow.
#[inline]
fn ln_2cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// `1 / (1 + exp(-t))` evaluated stably.
#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Smooth factor of the conditional density of a squared coordinate:
/// `exp(aθ + b√(1-θ)) · 2cosh(d√θ)`, in log space.
///
/// Summing the density over both signs of the coordinate produces the
/// `2cosh` factor.
#[inline]
fn log_smooth_factor(theta: f64, a: f64, b: f64, d: f64) -> f64 {
    let one_minus = (1.0 - theta).max(0.0);
    a * theta + b * one_minus.sqrt() + ln_2cosh(d * theta.max(0.0).sqrt())
}

/// Upper bound of `log_smooth_factor` over `[0, 1]`: coarse grid scan plus
/// golden-section refinement around the best bracket.
fn log_envelope(a: f64, b: f64, d: f64) -> f64 {
    const GRID: usize = 64;
    let mut best = f64::NEG_INFINITY;
    let mut best_i = 0usize;
    for i in 0..=GRID {
        let theta = i as f64 / GRID as f64;
        let v = log_smooth_factor(theta, a, b, d);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = if best_i == 0 { 0.0 } else { (best_i - 1) as f64 / GRID as f64 };
    let hi = if best_i == GRID { 1.0 } else { (best_i + 1) as f64 / GRID as f64 };
    let phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
    let (mut lo, mut hi) = (lo, hi);
    let (mut f1, mut f2) = (
        log_smooth_factor(x1, a, b, d),
        log_smooth_factor(x2, a, b, d),
    );
    for _ in 0..48 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = log_smooth_factor(x1, a, b, d);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = log_smooth_factor(x2, a, b, d);
        }
    }
    best.max(f1).max(f2) + 1e-9
}

/// Draws `θ ∈ [0, 1]` from the density proportional to
/// `θ^{-1/2} (1-θ)^{(M-3)/2} exp(aθ + b√(1-θ)) 2cosh(d√θ)`.
fn sample_theta(m: usize, a: f64, b: f64, d: f64, rng: &mut impl Rng) -> f64 {
    debug_assert!(m >= 2);
    let log_env = log_envelope(a, b, d);
    let beta = Beta::new(0.5, (m as f64 - 1.0) / 2.0).expect("valid beta parameters");
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let theta: f64 = beta.sample(rng);
        let log_u = rng.random::<f64>().max(f64::MIN_POSITIVE).ln();
        if log_u <= log_smooth_factor(theta, a, b, d) - log_env {
            return theta;
        }
    }
    grid_inverse_theta(m, a, b, d, rng)
}

/// Inverse-CDF fallback on the substitution `θ = sin²φ`, which removes both
/// endpoint singularities: the transformed density is
/// `(cos φ)^{M-2} exp(a sin²φ + b cos φ) 2cosh(d sin φ)` on `[0, π/2]`.
fn grid_inverse_theta(m: usize, a: f64, b: f64, d: f64, rng: &mut impl Rng) -> f64 {
    const BINS: usize = 2048;
    let dphi = std::f64::consts::FRAC_PI_2 / BINS as f64;
    let mut logw = [0.0f64; BINS];
    let mut max_lw = f64::NEG_INFINITY;
    for (i, lw) in logw.iter_mut().enumerate() {
        let phi = (i as f64 + 0.5) * dphi;
        let cos = phi.cos();
        let v = (m as f64 - 2.0) * cos.max(1e-300).ln()
            + log_smooth_factor((phi.sin()).powi(2), a, b, d);
        *lw = v;
        max_lw = max_lw.max(v);
    }
    let mut total = 0.0;
    let mut cdf = [0.0f64; BINS];
    for i in 0..BINS {
        total += (logw[i] - max_lw).exp();
        cdf[i] = total;
    }
    let target = rng.random::<f64>() * total;
    let mut idx = match cdf.binary_search_by(|v| v.total_cmp(&target)) {
        Ok(i) | Err(i) => i,
    };
    if idx >= BINS {
        idx = BINS - 1;
    }
    let prev = if idx == 0 { 0.0 } else { cdf[idx - 1] };
    let within = ((target - prev) / (cdf[idx] - prev).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
    let phi = (idx as f64 + within) * dphi;
    (phi.sin()).powi(2).clamp(0.0, 1.0)
}

/// Runs `sweeps` Gibbs cycles over the coordinates of a vector BMF density
/// and returns the final unit vector.
///
/// Each cycle visits all coordinates in a fresh random order, drawing the
/// squared coordinate from its exact conditional and then the sign with
/// odds `exp(±d√θ)`.
pub fn sample_vector_bmf(
    params: &VectorBmfParams,
    x0: &DVector<f64>,
    rng: &mut impl Rng,
    sweeps: usize,
) -> Result<DVector<f64>> {
    let m = params.dim();
    if x0.len() != m {
        return Err(Error::shape(format!(
            "initial vector has length {}, expected {m}",
            x0.len()
        )));
    }
    if (x0.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::arg(format!(
            "initial vector must be unit norm, got {}",
            x0.norm()
        )));
    }
    if sweeps == 0 {
        return Err(Error::arg("sweeps must be >= 1"));
    }

    if m == 1 {
        // On the 0-sphere {-1, +1} the quadratic term is constant.
        let d = params.d[0];
        let mut y = 0.0;
        for _ in 0..sweeps {
            y = if rng.random::<f64>() < logistic(2.0 * d) { 1.0 } else { -1.0 };
        }
        let x = &params.eigvecs * DVector::from_vec(vec![y]);
        return Ok(x);
    }

    let mut y = params.eigvecs.transpose() * x0;
    let norm = y.norm();
    y /= norm;
    let mut order: Vec<usize> = (0..m).collect();
    for _ in 0..sweeps {
        order.shuffle(rng);
        for &k in &order {
            gibbs_coordinate_update(params, k, &mut y, rng);
        }
    }
    let mut x = &params.eigvecs * y;
    let norm = x.norm();
    x /= norm;
    Ok(x)
}

fn gibbs_coordinate_update(
    params: &VectorBmfParams,
    k: usize,
    y: &mut DVector<f64>,
    rng: &mut impl Rng,
) {
    let m = params.dim();
    let lambda = &params.eigvals;
    let d = &params.d;
    let theta_old = y[k] * y[k];
    let denom = 1.0 - theta_old;

    // Relative masses and signs of the other coordinates; these stay fixed
    // while θₖ moves, the complement being rescaled by (1-θₖ).
    let mut q = vec![0.0f64; m];
    let mut s = vec![1.0f64; m];
    if denom > 1e-14 {
        let mut total = 0.0;
        for l in 0..m {
            if l != k {
                q[l] = (y[l] * y[l]) / denom;
                total += q[l];
            }
            if y[l] < 0.0 {
                s[l] = -1.0;
            }
        }
        if total > 0.0 {
            for ql in q.iter_mut() {
                *ql /= total;
            }
        }
    } else {
        // Degenerate state y = ±eₖ: the complement direction is lost; any
        // choice of q keeps the kernel valid.
        for (l, ql) in q.iter_mut().enumerate() {
            if l != k {
                *ql = 1.0 / (m as f64 - 1.0);
            }
        }
    }

    let mut a_k = lambda[k];
    let mut b_k = 0.0;
    for l in 0..m {
        if l == k {
            continue;
        }
        a_k -= q[l] * lambda[l];
        b_k += s[l] * q[l].sqrt() * d[l];
    }

    let theta = sample_theta(m, a_k, b_k, d[k], rng);
    let s_k = if rng.random::<f64>() < logistic(2.0 * d[k] * theta.sqrt()) {
        1.0
    } else {
        -1.0
    };
    let scale = (1.0 - theta).max(0.0).sqrt();
    for l in 0..m {
        if l != k {
            y[l] = s[l] * q[l].sqrt() * scale;
        }
    }
    y[k] = s_k * theta.sqrt();
}

/// One full column sweep of the matrix BMF Gibbs sampler.
///
/// Columns are visited in a fresh random order. For column `k` the state is
/// written `xₖ = Q⊥ z` with `Q⊥` an orthonormal basis of `range(X₋ₖ)⊥`, and
/// `z` is drawn from the vector BMF density with quadratic matrix
/// `Σⱼ Bⱼ(k,k) Q⊥ᵀ Aⱼ Q⊥` and linear coefficient `Q⊥ᵀ cₖ`. The result is
/// orthonormal by construction; a cheap correction pass guards against
/// floating-point drift.
pub fn sample_matrix_bmf_sweep(
    params: &BmfParams,
    x: &OrthonormalBasis,
    rng: &mut impl Rng,
) -> Result<OrthonormalBasis> {
    let (n, p) = (x.n(), x.p());
    if params.ambient() != n || params.width() != p {
        return Err(Error::shape(format!(
            "params are {} x {}, state is {n} x {p}",
            params.ambient(),
            params.width()
        )));
    }
    let mut state = x.matrix().clone();
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(rng);
    for &k in &order {
        let others = drop_column(&state, k);
        let q_perp = null_space_basis(&others)?;
        let qp = q_perp.matrix();
        let m = qp.ncols();

        let mut a_tilde = DMatrix::zeros(m, m);
        for term in params.quadratic() {
            let w = term.weights()[k];
            if w != 0.0 {
                let proj = qp.transpose() * term.matrix() * qp;
                a_tilde += proj * w;
            }
        }
        a_tilde = (&a_tilde + a_tilde.transpose()) * 0.5;
        let c_tilde = qp.transpose() * params.linear().column(k);

        let mut z0 = qp.transpose() * state.column(k);
        let norm = z0.norm();
        if norm < 1e-8 {
            // Current column nearly parallel to the others; restart the
            // coordinate anywhere on the complement sphere.
            z0 = DVector::zeros(m);
            z0[0] = 1.0;
        } else {
            z0 /= norm;
        }

        let vparams = VectorBmfParams::new(a_tilde, c_tilde)?;
        let z = sample_vector_bmf(&vparams, &z0, rng, 1)?;
        let mut new_col = qp * z;

        // Drift guard: stay orthogonal to the fixed columns.
        let cross = others.transpose() * &new_col;
        if cross.amax() > 1e-12 {
            new_col -= &others * cross;
        }
        let norm = new_col.norm();
        new_col /= norm;
        state.set_column(k, &new_col);
    }
    Ok(OrthonormalBasis::new_unchecked(state))
}

fn drop_column(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (n, p) = (m.nrows(), m.ncols());
    let mut out = DMatrix::zeros(n, p - 1);
    let mut dst = 0;
    for j in 0..p {
        if j != k {
            out.set_column(dst, &m.column(j));
            dst += 1;
        }
    }
    out
}

/// Parameters of a gamma density `x^{a-1} e^{-bx}` truncated to `[lo, hi]`.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedGammaParams {
    pub shape: f64,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedGammaParams {
    pub fn new(shape: f64, rate: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(shape > 0.0) || !(rate > 0.0) {
            return Err(Error::arg(format!(
                "shape and rate must be positive, got shape={shape}, rate={rate}"
            )));
        }
        if !(lo >= 0.0) || !(lo < hi) {
            return Err(Error::arg(format!(
                "bounds must satisfy 0 <= lo < hi, got lo={lo}, hi={hi}"
            )));
        }
        Ok(Self { shape, rate, lo, hi })
    }
}

/// Draws from a doubly truncated gamma density.
///
/// Strategy: first try plain gamma draws restricted to the interval, then
/// accept-reject with a uniform proposal under the exact unimodal envelope,
/// and finally grid inversion, which always succeeds. No error reaches the
/// caller from the sampling loop itself.
pub fn sample_truncated_gamma(params: &TruncatedGammaParams, rng: &mut impl Rng) -> f64 {
    let TruncatedGammaParams { shape: a, rate: b, lo, hi } = *params;
    let gamma = Gamma::new(a, 1.0 / b).expect("validated parameters");
    for _ in 0..64 {
        let x = gamma.sample(rng);
        if x >= lo && x <= hi {
            return x;
        }
    }

    let log_f = |x: f64| -> f64 {
        if x <= 0.0 {
            if a > 1.0 {
                f64::NEG_INFINITY
            } else if a == 1.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (a - 1.0) * x.ln() - b * x
        }
    };

    // The density is unimodal, so the envelope is attained at an endpoint or
    // at the interior critical point (a-1)/b.
    let mut log_env = log_f(lo).max(log_f(hi));
    if a > 1.0 {
        let mode = (a - 1.0) / b;
        if mode > lo && mode < hi {
            log_env = log_env.max(log_f(mode));
        }
    }
    if log_env.is_finite() {
        for _ in 0..MAX_REJECTION_ATTEMPTS {
            let x = lo + rng.random::<f64>() * (hi - lo);
            let log_u = rng.random::<f64>().max(f64::MIN_POSITIVE).ln();
            if log_u <= log_f(x) - log_env {
                return x;
            }
        }
    }

    // Grid inversion fallback.
    const BINS: usize = 4096;
    let left = if lo == 0.0 && a < 1.0 { hi * 1e-12 } else { lo };
    let dx = (hi - left) / BINS as f64;
    let mut cdf = vec![0.0f64; BINS];
    let mut max_lw = f64::NEG_INFINITY;
    let mut logw = vec![0.0f64; BINS];
    for i in 0..BINS {
        let x = left + (i as f64 + 0.5) * dx;
        logw[i] = log_f(x);
        max_lw = max_lw.max(logw[i]);
    }
    let mut total = 0.0;
    for i in 0..BINS {
        total += (logw[i] - max_lw).exp();
        cdf[i] = total;
    }
    let target = rng.random::<f64>() * total;
    let mut idx = match cdf.binary_search_by(|v| v.total_cmp(&target)) {
        Ok(i) | Err(i) => i,
    };
    if idx >= BINS {
        idx = BINS - 1;
    }
    let prev = if idx == 0 { 0.0 } else { cdf[idx - 1] };
    let within = ((target - prev) / (cdf[idx] - prev).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
    (left + (idx as f64 + within) * dx).clamp(lo, hi)
}

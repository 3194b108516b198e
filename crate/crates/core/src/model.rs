//! Observation models and their Gibbs chains.
//!
//! Two models are supported, both with a Bingham or von Mises-Fisher prior
//! on the basis `U`, centered on a nominal `Ubar` with concentration `κ`:
//!
//! * **Linear model** `Y = U S + N`: after marginalizing the flat-prior
//!   waveforms `S`, the likelihood depends on `U` only through
//!   `tr(Uᵀ Y Yᵀ U) / (2σ_n²)`. Under the Bingham prior the posterior is the
//!   Bingham density with matrix `κ Ubar Ubarᵀ + Y Yᵀ/(2σ_n²)`; under the
//!   vMF prior it is a matrix BMF density.
//!
//! * **Covariance model** `E[y yᵀ] = U Λ Uᵀ + σ_n² I` with known noise power
//!   `σ_n² = 1/ν`, reparametrized by `γ_k = σ_n²/(σ_n² + λ_k) ∈ (0,1)` with
//!   a uniform prior on `[γ₋, γ₊]`. A two-block Gibbs sampler alternates a
//!   (modified) Bingham/BMF draw of `U | Y, γ` with independent doubly
//!   truncated gamma draws of `γ_k | Y, U`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{gram_schmidt_in_place, null_space_basis, uniform_stiefel, OrthonormalBasis};
use crate::sampling::{
    sample_matrix_bmf_sweep, sample_truncated_gamma, sample_vector_bmf, BmfParams, QuadraticTerm,
    TruncatedGammaParams, VectorBmfParams,
};

/// Prior family for the subspace basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    /// `π(U) ∝ etr(κ Uᵀ Ubar Ubarᵀ U)`; a distribution on subspaces (it
    /// depends on `U Uᵀ` only).
    Bingham,
    /// `π(U) ∝ etr(κ Uᵀ Ubar)`; concentrates `U` itself near `Ubar`.
    Vmf,
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PriorKind::Bingham => write!(f, "bingham"),
            PriorKind::Vmf => write!(f, "vmf"),
        }
    }
}

impl std::str::FromStr for PriorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bingham" => Ok(PriorKind::Bingham),
            "vmf" => Ok(PriorKind::Vmf),
            other => Err(Error::arg(format!(
                "unknown prior `{other}` (valid: bingham, vmf)"
            ))),
        }
    }
}

/// Linear observation model specification.
#[derive(Debug, Clone)]
pub struct LinearModelSpec {
    pub ubar: OrthonormalBasis,
    pub kappa: f64,
    pub sigma2_n: f64,
    pub prior: PriorKind,
}

impl LinearModelSpec {
    pub fn new(ubar: OrthonormalBasis, kappa: f64, sigma2_n: f64, prior: PriorKind) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::arg(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(sigma2_n > 0.0) {
            return Err(Error::arg(format!("sigma2_n must be > 0, got {sigma2_n}")));
        }
        Ok(Self { ubar, kappa, sigma2_n, prior })
    }

    /// Unnormalized log-posterior of `u` given `y` (constants dropped).
    pub fn log_posterior(&self, u: &OrthonormalBasis, y: &DMatrix<f64>) -> f64 {
        let data = (y.transpose() * u.matrix()).norm_squared() / (2.0 * self.sigma2_n);
        data + prior_exponent(self.prior, self.kappa, &self.ubar, u)
    }
}

/// Covariance observation model specification.
#[derive(Debug, Clone)]
pub struct CovModelSpec {
    pub ubar: OrthonormalBasis,
    pub kappa: f64,
    pub prior: PriorKind,
    /// Inverse noise power `ν = 1/σ_n²`, assumed known.
    pub nu: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl CovModelSpec {
    pub fn new(
        ubar: OrthonormalBasis,
        kappa: f64,
        prior: PriorKind,
        nu: f64,
        gamma_lo: f64,
        gamma_hi: f64,
    ) -> Result<Self> {
        if !(kappa >= 0.0) {
            return Err(Error::arg(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(nu > 0.0) {
            return Err(Error::arg(format!("nu must be > 0, got {nu}")));
        }
        if !(0.0 <= gamma_lo && gamma_lo < gamma_hi && gamma_hi <= 1.0) {
            return Err(Error::arg(format!(
                "gamma bounds must satisfy 0 <= lo < hi <= 1, got [{gamma_lo}, {gamma_hi}]"
            )));
        }
        Ok(Self { ubar, kappa, prior, nu, gamma_lo, gamma_hi })
    }

    /// Unnormalized log-posterior of `(u, γ)` given `y`; `-inf` when any
    /// `γ_k` leaves the prior support.
    pub fn log_posterior(&self, u: &OrthonormalBasis, gamma: &[f64], y: &DMatrix<f64>) -> f64 {
        if gamma.len() != u.p() {
            return f64::NEG_INFINITY;
        }
        if gamma
            .iter()
            .any(|&g| g < self.gamma_lo || g > self.gamma_hi)
        {
            return f64::NEG_INFINITY;
        }
        let k_snap = y.ncols() as f64;
        let mut acc = prior_exponent(self.prior, self.kappa, &self.ubar, u);
        for (k, &g) in gamma.iter().enumerate() {
            let z = y.transpose() * u.column(k);
            acc += 0.5 * k_snap * g.max(f64::MIN_POSITIVE).ln();
            acc += 0.5 * self.nu * (1.0 - g) * z.norm_squared();
        }
        acc
    }
}

fn prior_exponent(prior: PriorKind, kappa: f64, ubar: &OrthonormalBasis, u: &OrthonormalBasis) -> f64 {
    match prior {
        PriorKind::Bingham => kappa * (ubar.matrix().transpose() * u.matrix()).norm_squared(),
        PriorKind::Vmf => kappa * (ubar.matrix().transpose() * u.matrix()).trace(),
    }
}

/// Retained posterior samples from one Gibbs chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    bases: Vec<OrthonormalBasis>,
    gammas: Option<Vec<Vec<f64>>>,
    log_density: Vec<f64>,
    n_burnin: usize,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn bases(&self) -> &[OrthonormalBasis] {
        &self.bases
    }

    pub fn gammas(&self) -> Option<&[Vec<f64>]> {
        self.gammas.as_deref()
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    pub fn n_burnin(&self) -> usize {
        self.n_burnin
    }

    /// Average projector `(1/N_r) Σ U⁽ⁿ⁾ U⁽ⁿ⁾ᵀ`.
    pub fn mean_projector(&self) -> Result<DMatrix<f64>> {
        let first = self.bases.first().ok_or(Error::EmptyChain)?;
        let n = first.n();
        let mut acc = DMatrix::zeros(n, n);
        for b in &self.bases {
            acc += b.projector();
        }
        Ok(acc / self.bases.len() as f64)
    }

    /// Average of the raw bases `(1/N_r) Σ U⁽ⁿ⁾`.
    pub fn mean_basis(&self) -> Result<DMatrix<f64>> {
        let first = self.bases.first().ok_or(Error::EmptyChain)?;
        let mut acc = DMatrix::zeros(first.n(), first.p());
        for b in &self.bases {
            acc += b.matrix();
        }
        Ok(acc / self.bases.len() as f64)
    }

    /// Per-component posterior mean of γ, when the chain carries γ samples.
    pub fn mean_gamma(&self) -> Option<Vec<f64>> {
        let gammas = self.gammas.as_ref()?;
        let first = gammas.first()?;
        let mut acc = vec![0.0; first.len()];
        for g in gammas {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
        for a in acc.iter_mut() {
            *a /= gammas.len() as f64;
        }
        Some(acc)
    }

    #[cfg(test)]
    pub(crate) fn from_bases_for_tests(bases: Vec<OrthonormalBasis>) -> Self {
        let log_density = vec![0.0; bases.len()];
        Self { bases, gammas: None, log_density, n_burnin: 0 }
    }
}

/// Builds a chain from raw parts; used by estimators and tests.
pub fn chain_from_parts(
    bases: Vec<OrthonormalBasis>,
    gammas: Option<Vec<Vec<f64>>>,
    log_density: Vec<f64>,
    n_burnin: usize,
) -> Result<ChainOutput> {
    if bases.is_empty() {
        return Err(Error::EmptyChain);
    }
    if bases.len() != log_density.len() {
        return Err(Error::shape(format!(
            "{} bases but {} log-density entries",
            bases.len(),
            log_density.len()
        )));
    }
    if let Some(g) = &gammas {
        if g.len() != bases.len() {
            return Err(Error::shape(format!(
                "{} bases but {} gamma vectors",
                bases.len(),
                g.len()
            )));
        }
    }
    Ok(ChainOutput { bases, gammas, log_density, n_burnin })
}

/// Simulates `Y = U S + N` with i.i.d. zero-mean Gaussian waveforms
/// (variance `sigma2_s`) and noise (variance `sigma2_n`), `k` snapshots.
pub fn generate_linear_data(
    u: &OrthonormalBasis,
    sigma2_s: f64,
    sigma2_n: f64,
    k: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    if k < 1 {
        return Err(Error::arg("need at least one snapshot"));
    }
    if !(sigma2_s >= 0.0) || !(sigma2_n >= 0.0) {
        return Err(Error::arg("variances must be nonnegative"));
    }
    let (n, p) = (u.n(), u.p());
    let ss = sigma2_s.sqrt();
    let sn = sigma2_n.sqrt();
    let mut s = DMatrix::zeros(p, k);
    for j in 0..k {
        for i in 0..p {
            let z: f64 = StandardNormal.sample(rng);
            s[(i, j)] = ss * z;
        }
    }
    let mut y = u.matrix() * s;
    for j in 0..k {
        for i in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            y[(i, j)] += sn * z;
        }
    }
    Ok(y)
}

/// Simulates `k` zero-mean Gaussian snapshots with covariance
/// `ν⁻¹ U⊥ U⊥ᵀ + ν⁻¹ U Γ⁻¹ Uᵀ`, the covariance-model law with signal
/// eigenvalues recovered from `γ_k = σ_n²/(σ_n² + λ_k)`.
pub fn generate_cov_data(
    u: &OrthonormalBasis,
    gamma: &[f64],
    nu: f64,
    k: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    if k < 1 {
        return Err(Error::arg("need at least one snapshot"));
    }
    if !(nu > 0.0) {
        return Err(Error::arg(format!("nu must be > 0, got {nu}")));
    }
    let (n, p) = (u.n(), u.p());
    if gamma.len() != p {
        return Err(Error::shape(format!(
            "gamma has length {}, expected {p}",
            gamma.len()
        )));
    }
    if gamma.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::arg(format!(
            "every gamma must lie strictly inside (0, 1), got {gamma:?}"
        )));
    }
    let scale = nu.sqrt().recip();
    let mut y = DMatrix::zeros(n, k);
    // Signal part: columns of U scaled by sqrt(σ_n²/γ_k) = sqrt(σ_n² + λ_k).
    for j in 0..k {
        for (idx, &g) in gamma.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            let amp = scale / g.sqrt();
            let col = u.matrix().column(idx);
            for i in 0..n {
                y[(i, j)] += amp * z * col[i];
            }
        }
    }
    if p < n {
        let perp = null_space_basis(u.matrix())?;
        for j in 0..k {
            for idx in 0..(n - p) {
                let z: f64 = StandardNormal.sample(rng);
                let col = perp.matrix().column(idx);
                for i in 0..n {
                    y[(i, j)] += scale * z * col[i];
                }
            }
        }
    }
    Ok(y)
}

/// Matrix BMF parameters of the linear-model posterior `p(U | Y)`.
///
/// Bingham prior: one quadratic term `κ Ubar Ubarᵀ + Y Yᵀ/(2σ_n²)` with unit
/// weights and no linear part. vMF prior: quadratic `Y Yᵀ` with weights
/// `1/(2σ_n²)` and linear term `κ Ubar`.
pub fn lm_posterior_params(y: &DMatrix<f64>, spec: &LinearModelSpec) -> Result<BmfParams> {
    let (n, p) = (spec.ubar.n(), spec.ubar.p());
    if y.nrows() != n {
        return Err(Error::shape(format!(
            "data has {} rows, ambient dimension is {n}",
            y.nrows()
        )));
    }
    let yyt = y * y.transpose();
    match spec.prior {
        PriorKind::Bingham => {
            let a = spec.ubar.projector() * spec.kappa + &yyt / (2.0 * spec.sigma2_n);
            BmfParams::bingham((&a + a.transpose()) * 0.5, p)
        }
        PriorKind::Vmf => {
            let term = QuadraticTerm::new(
                (&yyt + yyt.transpose()) * 0.5,
                DVector::from_element(p, 1.0 / (2.0 * spec.sigma2_n)),
            )?;
            BmfParams::new(vec![term], spec.ubar.matrix() * spec.kappa)
        }
    }
}

/// Matrix BMF parameters of `U | Y, γ` in the covariance model.
pub fn cov_posterior_params(
    y: &DMatrix<f64>,
    spec: &CovModelSpec,
    gamma: &[f64],
) -> Result<BmfParams> {
    let (n, p) = (spec.ubar.n(), spec.ubar.p());
    if y.nrows() != n {
        return Err(Error::shape(format!(
            "data has {} rows, ambient dimension is {n}",
            y.nrows()
        )));
    }
    if gamma.len() != p {
        return Err(Error::shape(format!(
            "gamma has length {}, expected {p}",
            gamma.len()
        )));
    }
    let yyt = y * y.transpose();
    let data_weights =
        DVector::from_iterator(p, gamma.iter().map(|&g| 0.5 * spec.nu * (1.0 - g)));
    let data_term = QuadraticTerm::new((&yyt + yyt.transpose()) * 0.5, data_weights)?;
    match spec.prior {
        PriorKind::Bingham => {
            let prior_term = QuadraticTerm::new(
                spec.ubar.projector() * spec.kappa,
                DVector::from_element(p, 1.0),
            )?;
            BmfParams::new(vec![prior_term, data_term], DMatrix::zeros(n, p))
        }
        PriorKind::Vmf => BmfParams::new(vec![data_term], spec.ubar.matrix() * spec.kappa),
    }
}

/// Sweeps between full re-orthonormalizations of the chain state.
const REORTHONORMALIZE_EVERY: usize = 100;

/// Runs the linear-model Gibbs chain: `n_bi` burn-in sweeps followed by
/// `n_r` retained sweeps, initialized at `Ubar`.
pub fn run_lm_chain(
    y: &DMatrix<f64>,
    spec: &LinearModelSpec,
    n_bi: usize,
    n_r: usize,
    rng: &mut impl Rng,
) -> Result<ChainOutput> {
    if n_r < 1 {
        return Err(Error::arg("n_r must be >= 1"));
    }
    let params = lm_posterior_params(y, spec)?;
    let mut state = spec.ubar.clone();
    let mut bases = Vec::with_capacity(n_r);
    let mut log_density = Vec::with_capacity(n_r);
    for it in 1..=(n_bi + n_r) {
        state = sample_matrix_bmf_sweep(&params, &state, rng)?;
        if it % REORTHONORMALIZE_EVERY == 0 {
            let mut m = state.matrix().clone();
            gram_schmidt_in_place(&mut m)?;
            state = OrthonormalBasis::new(m)?;
        }
        if it > n_bi {
            log_density.push(spec.log_posterior(&state, y));
            bases.push(state.clone());
        }
    }
    chain_from_parts(bases, None, log_density, n_bi)
}

/// Runs the covariance-model Gibbs chain, alternating a (modified)
/// Bingham/BMF column sweep of `U | Y, γ` and per-component truncated gamma
/// draws of `γ_k | Y, U` with shape `K/2 + 1` and rate `(ν/2)‖Yᵀ u_k‖²`.
///
/// Initialization: `U = Ubar`, `γ_k = (γ₋ + γ₊)/2`.
pub fn run_cov_chain(
    y: &DMatrix<f64>,
    spec: &CovModelSpec,
    n_bi: usize,
    n_r: usize,
    rng: &mut impl Rng,
) -> Result<ChainOutput> {
    if n_r < 1 {
        return Err(Error::arg("n_r must be >= 1"));
    }
    let p = spec.ubar.p();
    let k_snap = y.ncols() as f64;
    let mut state = spec.ubar.clone();
    let mut gamma = vec![0.5 * (spec.gamma_lo + spec.gamma_hi); p];
    let mut bases = Vec::with_capacity(n_r);
    let mut gammas = Vec::with_capacity(n_r);
    let mut log_density = Vec::with_capacity(n_r);
    for it in 1..=(n_bi + n_r) {
        let params = cov_posterior_params(y, spec, &gamma)?;
        state = sample_matrix_bmf_sweep(&params, &state, rng)?;
        if it % REORTHONORMALIZE_EVERY == 0 {
            let mut m = state.matrix().clone();
            gram_schmidt_in_place(&mut m)?;
            state = OrthonormalBasis::new(m)?;
        }
        for k in 0..p {
            let z = y.transpose() * state.column(k);
            let rate = 0.5 * spec.nu * z.norm_squared();
            // A zero data column would make the rate vanish; keep it positive.
            let rate = rate.max(1e-12);
            let tg = TruncatedGammaParams::new(
                0.5 * k_snap + 1.0,
                rate,
                spec.gamma_lo,
                spec.gamma_hi,
            )?;
            gamma[k] = sample_truncated_gamma(&tg, rng);
        }
        if it > n_bi {
            log_density.push(spec.log_posterior(&state, &gamma, y));
            bases.push(state.clone());
            gammas.push(gamma.clone());
        }
    }
    chain_from_parts(bases, Some(gammas), log_density, n_bi)
}

/// Default number of sweeps used to draw one basis from a prior.
pub const PRIOR_BURNIN_DEFAULT: usize = 80;

/// Draws one basis from the Bingham or vMF prior centered on `ubar`.
///
/// `κ = 0` reduces both priors to the uniform distribution and is sampled
/// exactly; otherwise a Gibbs chain initialized at `ubar` is run for
/// `burnin` sweeps.
pub fn draw_from_prior(
    prior: PriorKind,
    ubar: &OrthonormalBasis,
    kappa: f64,
    burnin: usize,
    rng: &mut impl Rng,
) -> Result<OrthonormalBasis> {
    let (n, p) = (ubar.n(), ubar.p());
    if kappa == 0.0 {
        return uniform_stiefel(n, p, rng);
    }
    let params = match prior {
        PriorKind::Bingham => BmfParams::bingham(ubar.projector() * kappa, p)?,
        PriorKind::Vmf => BmfParams::vmf(ubar.matrix() * kappa)?,
    };
    let mut state = ubar.clone();
    for _ in 0..burnin.max(1) {
        state = sample_matrix_bmf_sweep(&params, &state, rng)?;
    }
    Ok(state)
}

/// Converts an SNR in dB to a signal variance given the noise variance.
pub fn snr_db_to_sigma2_s(snr_db: f64, sigma2_n: f64) -> f64 {
    sigma2_n * 10f64.powf(snr_db / 10.0)
}

/// Converts a per-component SNR in dB to its γ value `1/(1 + SNR)`.
pub fn snr_db_to_gamma(snr_db: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf(snr_db / 10.0))
}

/// Draws a unit vector from a vector BMF density after burn-in; exposed for
/// diagnostics and tests of the vector sampler.
pub fn draw_vector_bmf(
    params: &VectorBmfParams,
    x0: &DVector<f64>,
    burnin: usize,
    rng: &mut impl Rng,
) -> Result<DVector<f64>> {
    sample_vector_bmf(params, x0, rng, burnin.max(1))
}

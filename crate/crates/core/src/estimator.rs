//! Subspace estimators.
//!
//! The central estimator minimizes the posterior-expected squared projector
//! distance; its value is the matrix of the `p` principal eigenvectors of
//! the posterior mean of `U Uᵀ`. Under the linear model with a Bingham
//! prior that mean shares its eigenvectors with `κ Ubar Ubarᵀ +
//! Y Yᵀ/(2σ_n²)`, eigenvalue order included, so the estimator is closed
//! form; otherwise the projector mean is approximated from a Gibbs chain
//! (the induced arithmetic mean of the samples). The module also provides
//! the posterior-mean (MMSE) estimator, the MAP estimator, the plain SVD
//! estimator, and a Monte Carlo estimate of the Hilbert-Schmidt lower bound
//! on the expected squared distance.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    null_space_basis, squared_distance, top_p_eigvecs, OrthonormalBasis, RANK_REL_TOL,
};
use crate::model::{
    draw_from_prior, generate_linear_data, run_lm_chain, ChainOutput, LinearModelSpec, PriorKind,
    PRIOR_BURNIN_DEFAULT,
};
use crate::seeding::{child_seed, rng_from_seed};

/// The estimator family compared by the Monte Carlo harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Closed-form minimum mean-square-distance estimator (Bingham
    /// posteriors only).
    MmsdClosed,
    /// MMSD approximated by the induced arithmetic mean of a chain.
    MmsdMcmc,
    /// Orthonormalized posterior mean of the basis itself.
    Mmse,
    /// Maximum a posteriori estimate.
    Map,
    /// Principal left singular vectors of the data.
    Svd,
    /// The prior center, ignoring the data.
    PriorOnly,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::MmsdClosed,
        EstimatorKind::MmsdMcmc,
        EstimatorKind::Mmse,
        EstimatorKind::Map,
        EstimatorKind::Svd,
        EstimatorKind::PriorOnly,
    ];
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            EstimatorKind::MmsdClosed => "mmsd-closed",
            EstimatorKind::MmsdMcmc => "mmsd-mcmc",
            EstimatorKind::Mmse => "mmse",
            EstimatorKind::Map => "map",
            EstimatorKind::Svd => "svd",
            EstimatorKind::PriorOnly => "ubar",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmsd-closed" => Ok(EstimatorKind::MmsdClosed),
            "mmsd-mcmc" => Ok(EstimatorKind::MmsdMcmc),
            "mmse" => Ok(EstimatorKind::Mmse),
            "map" => Ok(EstimatorKind::Map),
            "svd" => Ok(EstimatorKind::Svd),
            "ubar" => Ok(EstimatorKind::PriorOnly),
            other => Err(Error::arg(format!(
                "unknown estimator `{other}` (valid: mmsd-closed, mmsd-mcmc, mmse, map, svd, ubar)"
            ))),
        }
    }
}

/// Closed-form MMSD estimate for the linear model with a Bingham prior:
/// the top-`p` eigenvectors of `κ Ubar Ubarᵀ + Y Yᵀ/(2σ_n²)`.
pub fn mmsd_closed_form(y: &DMatrix<f64>, spec: &LinearModelSpec) -> Result<OrthonormalBasis> {
    if spec.prior != PriorKind::Bingham {
        return Err(Error::UnsupportedPrior(spec.prior.to_string()));
    }
    if y.nrows() != spec.ubar.n() {
        return Err(Error::shape(format!(
            "data has {} rows, ambient dimension is {}",
            y.nrows(),
            spec.ubar.n()
        )));
    }
    let m = spec.ubar.projector() * spec.kappa + y * y.transpose() / (2.0 * spec.sigma2_n);
    top_p_eigvecs(&m, spec.ubar.p())
}

/// MMSD estimate from a chain: top-`p` eigenvectors of the average
/// projector (the induced arithmetic mean of the samples).
pub fn mmsd_from_chain(chain: &ChainOutput) -> Result<OrthonormalBasis> {
    let mean = chain.mean_projector()?;
    top_p_eigvecs(&mean, chain.bases()[0].p())
}

/// MMSE estimate: orthonormalized mean of the raw bases.
///
/// Under posteriors that depend on `U` only through `U Uᵀ` the mean
/// collapses toward zero and its range stops identifying a subspace; this
/// surfaces as [`Error::DegenerateMean`] carrying the achievable rank.
pub fn mmse_from_chain(chain: &ChainOutput) -> Result<OrthonormalBasis> {
    let (basis, degenerate_rank) = mmse_from_chain_completed(chain)?;
    match degenerate_rank {
        None => Ok(basis),
        Some(rank) => Err(Error::DegenerateMean {
            rank,
            requested: basis.p(),
        }),
    }
}

/// As [`mmse_from_chain`], but on a degenerate mean returns the rank-`r`
/// range completed with the deterministic orthonormal complement instead of
/// failing; the second value reports the achievable rank in that case.
pub fn mmse_from_chain_completed(
    chain: &ChainOutput,
) -> Result<(OrthonormalBasis, Option<usize>)> {
    let mean = chain.mean_basis()?;
    let p = mean.ncols();
    let svd = mean.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| smax > 0.0 && s > RANK_REL_TOL * smax)
        .count();
    if rank == p {
        let u = svd.u.expect("svd requested u");
        let vt = svd.v_t.expect("svd requested v_t");
        return Ok((OrthonormalBasis::new_unchecked(u * vt), None));
    }
    // Keep the identifiable directions, pad with the complement in index
    // order so downstream scoring stays well defined.
    let u = svd.u.expect("svd requested u");
    let n = mean.nrows();
    let mut out = DMatrix::zeros(n, p);
    for j in 0..rank {
        out.set_column(j, &u.column(j));
    }
    if rank == 0 {
        for j in 0..p {
            out[(j, j)] = 1.0;
        }
    } else {
        let kept = out.columns(0, rank).into_owned();
        let comp = null_space_basis(&kept)?;
        for j in rank..p {
            out.set_column(j, &comp.matrix().column(j - rank));
        }
    }
    Ok((OrthonormalBasis::new_unchecked(out), Some(rank)))
}

/// MAP estimate. Bingham posteriors admit the closed form (identical to the
/// MMSD estimator); vMF posteriors require a chain and return the retained
/// sample of largest recorded log-density.
pub fn map_estimate(
    y: &DMatrix<f64>,
    spec: &LinearModelSpec,
    chain: Option<&ChainOutput>,
) -> Result<OrthonormalBasis> {
    match spec.prior {
        PriorKind::Bingham => mmsd_closed_form(y, spec),
        PriorKind::Vmf => {
            let chain = chain.ok_or_else(|| {
                Error::arg("MAP under a vMF prior needs posterior samples")
            })?;
            map_from_chain(chain)
        }
    }
}

/// Retained sample attaining the maximum recorded log-density.
pub fn map_from_chain(chain: &ChainOutput) -> Result<OrthonormalBasis> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let mut best = 0usize;
    for (i, &ld) in chain.log_density().iter().enumerate() {
        if ld > chain.log_density()[best] {
            best = i;
        }
    }
    Ok(chain.bases()[best].clone())
}

/// SVD estimate with deterministic completion below `p` observed columns.
#[derive(Debug, Clone)]
pub struct SvdEstimate {
    pub basis: OrthonormalBasis,
    /// Number of columns filled from the orthonormal complement because the
    /// data provided fewer than `p` singular vectors.
    pub padded: usize,
}

/// Principal left singular vectors of `y`, with the crate sign convention.
///
/// When `K < p` the available `K` vectors are completed with the
/// deterministic orthonormal complement (in index order) and the count of
/// padded columns is reported.
pub fn svd_estimator(y: &DMatrix<f64>, p: usize) -> Result<SvdEstimate> {
    let (n, k) = (y.nrows(), y.ncols());
    if p < 1 || p > n {
        return Err(Error::arg(format!("p must satisfy 1 <= p <= {n}, got {p}")));
    }
    // Left singular vectors = eigenvectors of Y Yᵀ; reusing the spectral
    // path keeps the sign convention and tie-breaking uniform.
    let yyt = y * y.transpose();
    let avail = p.min(k);
    let mut out = DMatrix::zeros(n, p);
    let lead = top_p_eigvecs(&yyt, avail)?;
    for j in 0..avail {
        out.set_column(j, &lead.matrix().column(j));
    }
    let padded = p - avail;
    if padded > 0 {
        let comp = null_space_basis(lead.matrix())?;
        for j in avail..p {
            out.set_column(j, &comp.matrix().column(j - avail));
        }
    }
    Ok(SvdEstimate {
        basis: OrthonormalBasis::new_unchecked(out),
        padded,
    })
}

/// Monte Carlo estimate of the Hilbert-Schmidt bound together with the
/// matched empirical MMSD error, accumulated over the same trials.
#[derive(Debug, Clone, Copy)]
pub struct HsBoundRun {
    /// `2p − 2 Σ_{k≤p} E_Y[ℓ_k(Y)]`, the lower bound on the expected squared
    /// distance of any estimator.
    pub bound: f64,
    /// Mean squared distance of the MMSD estimate to the truth over the
    /// same trials.
    pub mmsd_mean_sq_dist: f64,
    /// Standard error of `mmsd_mean_sq_dist`.
    pub mmsd_stderr: f64,
}

/// Estimates the Hilbert-Schmidt bound for the linear model.
///
/// Each trial draws a truth from the prior, generates `k` snapshots, runs a
/// chain and records the top-`p` eigenvalues of the per-trial posterior
/// projector mean; the bound averages their sum over trials.
pub fn hs_bound_estimate(
    spec: &LinearModelSpec,
    sigma2_s: f64,
    k: usize,
    n_trials: usize,
    n_bi: usize,
    n_r: usize,
    master_seed: u64,
) -> Result<HsBoundRun> {
    if n_trials < 1 {
        return Err(Error::arg("need at least one trial"));
    }
    let p = spec.ubar.p();
    let per_trial: Vec<(f64, f64)> = (0..n_trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, f64)> {
            let mut rng = rng_from_seed(child_seed(master_seed, t as u64));
            let truth = draw_from_prior(
                spec.prior,
                &spec.ubar,
                spec.kappa,
                PRIOR_BURNIN_DEFAULT,
                &mut rng,
            )?;
            let y = generate_linear_data(&truth, sigma2_s, spec.sigma2_n, k, &mut rng)?;
            let chain = run_lm_chain(&y, spec, n_bi, n_r, &mut rng)?;
            let mean = chain.mean_projector()?;
            let dec = crate::geometry::spectral_decomposition(&mean)?;
            let top_sum: f64 = dec.values.iter().take(p).sum();
            let est = mmsd_from_chain(&chain)?;
            let d2 = squared_distance(&est, &truth)?;
            Ok((top_sum, d2))
        })
        .collect::<Result<Vec<_>>>()?;
    let nt = n_trials as f64;
    let mean_top: f64 = per_trial.iter().map(|x| x.0).sum::<f64>() / nt;
    let mean_d2: f64 = per_trial.iter().map(|x| x.1).sum::<f64>() / nt;
    let stderr = if n_trials > 1 {
        let var: f64 = per_trial
            .iter()
            .map(|x| (x.1 - mean_d2).powi(2))
            .sum::<f64>()
            / (nt - 1.0);
        (var / nt).sqrt()
    } else {
        0.0
    };
    Ok(HsBoundRun {
        bound: (2.0 * p as f64 - 2.0 * mean_top).max(0.0),
        mmsd_mean_sq_dist: mean_d2,
        mmsd_stderr: stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{afe, uniform_stiefel};
    use crate::model::generate_linear_data;
    use crate::seeding::rng_from_seed;

    #[test]
    fn estimator_names_round_trip() {
        for kind in EstimatorKind::ALL {
            let parsed: EstimatorKind = kind.to_string().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("newton".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn closed_form_no_data_returns_prior_center_range() {
        let mut rng = rng_from_seed(1);
        let ubar = uniform_stiefel(7, 3, &mut rng).unwrap();
        let spec = LinearModelSpec::new(ubar.clone(), 5.0, 1.0, PriorKind::Bingham).unwrap();
        let y = DMatrix::zeros(7, 2);
        let est = mmsd_closed_form(&y, &spec).unwrap();
        assert!(squared_distance(&est, &ubar).unwrap() < 1e-12);
    }

    #[test]
    fn closed_form_kappa_zero_equals_svd() {
        let mut rng = rng_from_seed(2);
        let ubar = OrthonormalBasis::identity_block(6, 2).unwrap();
        let truth = uniform_stiefel(6, 2, &mut rng).unwrap();
        let y = generate_linear_data(&truth, 2.0, 0.5, 8, &mut rng).unwrap();
        let spec = LinearModelSpec::new(ubar, 0.0, 0.5, PriorKind::Bingham).unwrap();
        let closed = mmsd_closed_form(&y, &spec).unwrap();
        let svd = svd_estimator(&y, 2).unwrap();
        assert!(squared_distance(&closed, &svd.basis).unwrap() < 1e-12);
    }

    #[test]
    fn closed_form_rejects_vmf_prior() {
        let ubar = OrthonormalBasis::identity_block(4, 2).unwrap();
        let spec = LinearModelSpec::new(ubar, 1.0, 1.0, PriorKind::Vmf).unwrap();
        let y = DMatrix::zeros(4, 2);
        assert!(matches!(
            mmsd_closed_form(&y, &spec),
            Err(Error::UnsupportedPrior(_))
        ));
    }

    #[test]
    fn iam_of_constant_chain_recovers_basis() {
        let mut rng = rng_from_seed(3);
        let u = uniform_stiefel(5, 2, &mut rng).unwrap();
        let chain = ChainOutput::from_bases_for_tests(vec![u.clone(); 8]);
        let est = mmsd_from_chain(&chain).unwrap();
        assert!(squared_distance(&est, &u).unwrap() < 1e-12);
    }

    #[test]
    fn iam_is_invariant_to_right_rotations() {
        let mut rng = rng_from_seed(4);
        let u = uniform_stiefel(5, 2, &mut rng).unwrap();
        let q = uniform_stiefel(2, 2, &mut rng).unwrap();
        let rotated = OrthonormalBasis::new(u.matrix() * q.matrix()).unwrap();
        let chain = ChainOutput::from_bases_for_tests(vec![u.clone(), rotated]);
        let est = mmsd_from_chain(&chain).unwrap();
        assert!(squared_distance(&est, &u).unwrap() < 1e-12);
    }

    #[test]
    fn iam_weighted_mixture_returns_majority_subspace() {
        // Mean projector = 0.6 P1 + 0.4 P2 with orthogonal spans has
        // eigenvalues {0.6 x p, 0.4 x p}; the top block is span(U1).
        let u1 = OrthonormalBasis::identity_block(6, 2).unwrap();
        let mut m2 = DMatrix::zeros(6, 2);
        m2[(2, 0)] = 1.0;
        m2[(3, 1)] = 1.0;
        let u2 = OrthonormalBasis::new(m2).unwrap();
        let mut bases = vec![u1.clone(); 6];
        bases.extend(vec![u2; 4]);
        let chain = ChainOutput::from_bases_for_tests(bases);
        let est = mmsd_from_chain(&chain).unwrap();
        assert!(squared_distance(&est, &u1).unwrap() < 1e-12);
    }

    #[test]
    fn mmse_of_constant_chain_is_that_basis() {
        let mut rng = rng_from_seed(5);
        let u = uniform_stiefel(5, 2, &mut rng).unwrap();
        let chain = ChainOutput::from_bases_for_tests(vec![u.clone(); 5]);
        let est = mmse_from_chain(&chain).unwrap();
        assert!((est.matrix() - u.matrix()).amax() < 1e-12);
    }

    #[test]
    fn mmse_detects_sign_symmetric_degeneracy() {
        let mut rng = rng_from_seed(6);
        let u = uniform_stiefel(5, 2, &mut rng).unwrap();
        let neg = OrthonormalBasis::new(-u.matrix().clone()).unwrap();
        let chain = ChainOutput::from_bases_for_tests(vec![u, neg]);
        match mmse_from_chain(&chain) {
            Err(Error::DegenerateMean { rank, requested }) => {
                assert_eq!(rank, 0);
                assert_eq!(requested, 2);
            }
            other => panic!("expected degenerate mean, got {other:?}"),
        }
    }

    #[test]
    fn map_equals_closed_form_under_bingham() {
        let mut rng = rng_from_seed(7);
        let ubar = uniform_stiefel(6, 2, &mut rng).unwrap();
        let truth = uniform_stiefel(6, 2, &mut rng).unwrap();
        let spec = LinearModelSpec::new(ubar, 10.0, 1.0, PriorKind::Bingham).unwrap();
        let y = generate_linear_data(&truth, 3.0, 1.0, 4, &mut rng).unwrap();
        let a = map_estimate(&y, &spec, None).unwrap();
        let b = mmsd_closed_form(&y, &spec).unwrap();
        assert!(squared_distance(&a, &b).unwrap() < 1e-12);
    }

    #[test]
    fn map_from_chain_attains_recorded_maximum() {
        let mut rng = rng_from_seed(8);
        let ubar = uniform_stiefel(6, 2, &mut rng).unwrap();
        let spec = LinearModelSpec::new(ubar.clone(), 8.0, 1.0, PriorKind::Vmf).unwrap();
        let y = generate_linear_data(&ubar, 2.0, 1.0, 3, &mut rng).unwrap();
        let chain = crate::model::run_lm_chain(&y, &spec, 5, 40, &mut rng).unwrap();
        let est = map_estimate(&y, &spec, Some(&chain)).unwrap();
        let best = chain
            .log_density()
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(spec.log_posterior(&est, &y), best);
        // Single retained sample: MAP is that sample.
        let single = crate::model::run_lm_chain(&y, &spec, 0, 1, &mut rng).unwrap();
        let est1 = map_estimate(&y, &spec, Some(&single)).unwrap();
        assert_eq!(est1.matrix(), single.bases()[0].matrix());
    }

    #[test]
    fn map_vmf_without_chain_is_an_error() {
        let ubar = OrthonormalBasis::identity_block(4, 2).unwrap();
        let spec = LinearModelSpec::new(ubar, 1.0, 1.0, PriorKind::Vmf).unwrap();
        let y = DMatrix::zeros(4, 2);
        assert!(map_estimate(&y, &spec, None).is_err());
    }

    #[test]
    fn svd_recovers_exact_factor_model() {
        let mut rng = rng_from_seed(9);
        let u = uniform_stiefel(6, 2, &mut rng).unwrap();
        // S with orthogonal rows, no noise.
        let s = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, -1.0]);
        let y = u.matrix() * s;
        let est = svd_estimator(&y, 2).unwrap();
        assert_eq!(est.padded, 0);
        assert!(squared_distance(&est.basis, &u).unwrap() < 1e-12);
    }

    #[test]
    fn svd_pads_when_snapshots_are_scarce() {
        let mut rng = rng_from_seed(10);
        let u = uniform_stiefel(6, 3, &mut rng).unwrap();
        let y = generate_linear_data(&u, 5.0, 0.0, 1, &mut rng).unwrap();
        let est = svd_estimator(&y, 3).unwrap();
        assert_eq!(est.padded, 2);
        assert!(est.basis.ortho_defect() < 1e-10);
        // First column is the observed direction.
        let dir = y.column(0).into_owned() / y.column(0).norm();
        let dot = est.basis.column(0).dot(&dir).abs();
        assert!((dot - 1.0).abs() < 1e-10);
    }

    #[test]
    fn svd_rank_one_direction() {
        let mut y = DMatrix::zeros(5, 3);
        for j in 0..3 {
            y[(2, j)] = (j + 1) as f64;
        }
        let est = svd_estimator(&y, 1).unwrap();
        assert!((est.basis.column(0)[2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hs_bound_collapses_for_dominant_prior() {
        let ubar = OrthonormalBasis::identity_block(6, 2).unwrap();
        let spec = LinearModelSpec::new(ubar, 1e4, 1.0, PriorKind::Bingham).unwrap();
        let run = hs_bound_estimate(&spec, 0.0, 2, 3, 5, 60, 42).unwrap();
        assert!(run.bound >= 0.0);
        assert!(run.bound < 0.05, "bound {}", run.bound);
    }

    #[test]
    fn hs_bound_is_below_mmsd_error() {
        let ubar = OrthonormalBasis::identity_block(8, 2).unwrap();
        let spec = LinearModelSpec::new(ubar, 5.0, 1.0, PriorKind::Bingham).unwrap();
        let run = hs_bound_estimate(&spec, 2.0, 3, 8, 10, 150, 7).unwrap();
        assert!(run.bound <= 2.0 * 2.0 + 1e-12);
        assert!(
            run.bound <= run.mmsd_mean_sq_dist + 3.0 * run.mmsd_stderr,
            "bound {} vs error {} ± {}",
            run.bound,
            run.mmsd_mean_sq_dist,
            run.mmsd_stderr
        );
    }

    #[test]
    fn mmse_afe_tracks_mmsd_under_vmf() {
        let mut rng = rng_from_seed(11);
        let ubar = OrthonormalBasis::identity_block(8, 2).unwrap();
        let truth = draw_from_prior(PriorKind::Vmf, &ubar, 50.0, 60, &mut rng).unwrap();
        let spec = LinearModelSpec::new(ubar, 50.0, 1.0, PriorKind::Vmf).unwrap();
        let y = generate_linear_data(&truth, 3.16, 1.0, 6, &mut rng).unwrap();
        let chain = run_lm_chain(&y, &spec, 10, 400, &mut rng).unwrap();
        let mmsd = mmsd_from_chain(&chain).unwrap();
        let mmse = mmse_from_chain(&chain).unwrap();
        let a = afe(&mmsd, &truth).unwrap();
        let b = afe(&mmse, &truth).unwrap();
        assert!((a - b).abs() < 0.05, "AFE gap {} vs {}", a, b);
    }
}

//! Bayesian subspace estimation on the Grassmann manifold.
//!
//! The crate estimates the range space of an unknown `N x p` orthonormal
//! matrix `U` from noisy data, combining the observed snapshots with a
//! Bingham or von Mises-Fisher prior centered on a nominal subspace `Ubar`.
//! Instead of minimizing the mean square error between `U` and its estimate,
//! the central estimator minimizes the mean square *distance* between the
//! projection matrices, which is the natural squared metric between
//! subspaces. The minimizer is the matrix of principal eigenvectors of the
//! posterior mean of `U Uᵀ`; depending on the model and prior it is either
//! available in closed form or approximated by Gibbs sampling.
//!
//! Module layout:
//! - [`geometry`]: bases, principal angles, projector distances, spectral
//!   primitives with a deterministic sign convention.
//! - [`sampling`]: Gibbs samplers for vector and matrix Bingham-von
//!   Mises-Fisher distributions (including rank-deficient parameter
//!   matrices) and a doubly truncated gamma sampler.
//! - [`model`]: data generation and posterior machinery for the
//!   linear-Gaussian and covariance-eigenstructure observation models.
//! - [`estimator`]: the estimator family (closed-form and MCMC MMSD, MMSE,
//!   MAP, SVD, prior-only) and the Hilbert-Schmidt bound.
//! - [`experiment`]: seeded Monte Carlo sweeps, prior characterization and
//!   chain diagnostics with CSV output.
//! - [`hyper`]: synthetic bilinear-mixture image generation and the
//!   per-pixel nonlinearity distance map.
//! - [`cli`]: configuration types and command runners behind the `mmsd`
//!   binary.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod geometry;
pub mod hyper;
pub mod model;
pub mod sampling;
pub mod seeding;

pub use error::{Error, Result};
pub use geometry::{
    afe, null_space_basis, orthonormalize, principal_angles, squared_distance, top_p_eigvecs,
    uniform_stiefel, OrthonormalBasis, PrincipalAngles, SpectralDecomposition,
};
pub use model::{ChainOutput, CovModelSpec, LinearModelSpec, PriorKind};
pub use sampling::{BmfParams, QuadraticTerm, TruncatedGammaParams, VectorBmfParams};

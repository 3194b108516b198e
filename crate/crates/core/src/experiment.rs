//! Monte Carlo benchmark harness.
//!
//! Sweeps the snapshot count or the SNR for one observation model and prior,
//! draws a fresh truth from the prior per trial, and scores every estimator
//! by its fraction of energy in the true subspace. Trials are independent
//! and run in parallel; every trial derives its own RNG stream from
//! `(master_seed, sweep index, trial index)` so the resulting tables are
//! byte-identical regardless of thread count.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    map_from_chain, mmsd_closed_form, mmsd_from_chain, mmse_from_chain_completed, svd_estimator,
    EstimatorKind,
};
use crate::geometry::{afe, principal_angles, squared_distance, OrthonormalBasis};
use crate::model::{
    draw_from_prior, generate_cov_data, generate_linear_data, run_cov_chain, run_lm_chain,
    snr_db_to_gamma, snr_db_to_sigma2_s, ChainOutput, CovModelSpec, LinearModelSpec, PriorKind,
};
use crate::seeding::{child_seed, rng_from_seed};

/// Observation model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Covariance,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Linear => write!(f, "linear"),
            ModelKind::Covariance => write!(f, "covariance"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(ModelKind::Linear),
            "covariance" => Ok(ModelKind::Covariance),
            other => Err(Error::arg(format!(
                "unknown model `{other}` (valid: linear, covariance)"
            ))),
        }
    }
}

/// Swept variable and its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variable", rename_all = "lowercase")]
pub enum SweepVariable {
    /// Sweep the snapshot count at a fixed SNR (dB).
    K { grid: Vec<usize>, snr_db: f64 },
    /// Sweep the SNR (dB) at a fixed snapshot count.
    Snr { grid: Vec<f64>, k: usize },
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::K { .. } => "K",
            SweepVariable::Snr { .. } => "SNR_dB",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepVariable::K { grid, .. } => grid.len(),
            SweepVariable::Snr { grid, .. } => grid.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn default_sigma2_n() -> f64 {
    1.0
}

fn default_n_bi() -> usize {
    10
}

fn default_n_r() -> usize {
    200
}

fn default_trials() -> usize {
    50
}

fn default_prior_burnin() -> usize {
    crate::model::PRIOR_BURNIN_DEFAULT
}

/// Full configuration of one AFE sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelKind,
    pub prior: PriorKind,
    pub n: usize,
    pub p: usize,
    pub kappa: f64,
    pub sweep: SweepVariable,
    #[serde(default = "default_sigma2_n")]
    pub sigma2_n: f64,
    /// Covariance model only: SNR window (dB) defining the γ prior bounds.
    #[serde(default)]
    pub snr_lo_db: Option<f64>,
    #[serde(default)]
    pub snr_hi_db: Option<f64>,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_n_bi")]
    pub n_bi: usize,
    #[serde(default = "default_n_r")]
    pub n_r: usize,
    #[serde(default = "default_prior_burnin")]
    pub prior_burnin: usize,
    pub master_seed: u64,
    /// Optional estimator subset; defaults to the model-appropriate set.
    #[serde(default)]
    pub estimators: Option<Vec<EstimatorKind>>,
}

impl SweepConfig {
    /// Model-appropriate default estimator set: the closed-form MMSD where
    /// it exists (linear model, Bingham prior), the chain-based MMSD
    /// elsewhere, plus MMSE, MAP, SVD and the prior center.
    pub fn default_estimators(&self) -> Vec<EstimatorKind> {
        let mmsd = if self.model == ModelKind::Linear && self.prior == PriorKind::Bingham {
            EstimatorKind::MmsdClosed
        } else {
            EstimatorKind::MmsdMcmc
        };
        vec![
            mmsd,
            EstimatorKind::Mmse,
            EstimatorKind::Map,
            EstimatorKind::Svd,
            EstimatorKind::PriorOnly,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::arg("sweep grid is empty"));
        }
        if self.n_trials < 1 {
            return Err(Error::arg("n_trials must be >= 1"));
        }
        if self.p < 1 || self.p > self.n {
            return Err(Error::arg(format!(
                "need 1 <= p <= n, got n={}, p={}",
                self.n, self.p
            )));
        }
        if !(self.sigma2_n > 0.0) {
            return Err(Error::arg("sigma2_n must be > 0"));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::arg("kappa must be >= 0"));
        }
        match self.model {
            ModelKind::Covariance => {
                if matches!(self.sweep, SweepVariable::Snr { .. }) {
                    return Err(Error::arg(
                        "the covariance model sweeps K; its SNR enters through the gamma window",
                    ));
                }
                let (lo, hi) = (
                    self.snr_lo_db.ok_or_else(|| {
                        Error::arg("covariance model needs snr_lo_db")
                    })?,
                    self.snr_hi_db.ok_or_else(|| {
                        Error::arg("covariance model needs snr_hi_db")
                    })?,
                );
                if !(lo < hi) {
                    return Err(Error::arg(format!(
                        "need snr_lo_db < snr_hi_db, got {lo} and {hi}"
                    )));
                }
            }
            ModelKind::Linear => {}
        }
        for kind in self.estimators.as_deref().unwrap_or(&[]) {
            if *kind == EstimatorKind::MmsdClosed
                && (self.model != ModelKind::Linear || self.prior != PriorKind::Bingham)
            {
                return Err(Error::arg(
                    "mmsd-closed exists only for the linear model with a Bingham prior",
                ));
            }
        }
        Ok(())
    }

    /// γ prior bounds derived from the SNR window: `γ = 1/(1 + SNR)`, so the
    /// *high* SNR bound gives the *low* γ bound.
    pub fn gamma_bounds(&self) -> Result<(f64, f64)> {
        let lo_db = self
            .snr_lo_db
            .ok_or_else(|| Error::arg("missing snr_lo_db"))?;
        let hi_db = self
            .snr_hi_db
            .ok_or_else(|| Error::arg("missing snr_hi_db"))?;
        Ok((snr_db_to_gamma(hi_db), snr_db_to_gamma(lo_db)))
    }
}

/// One row of an AFE results table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub mean_afe: f64,
    pub stderr: f64,
    pub n_fail: usize,
}

/// Estimator-vs-sweep-value AFE results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub notes: Vec<String>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "estimator,sweep_var,sweep_value,mean_afe,stderr,n_fail")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.estimator, r.sweep_var, r.sweep_value, r.mean_afe, r.stderr, r.n_fail
            )?;
        }
        Ok(())
    }

    /// Mean AFE for `(estimator, sweep_value)`, if present.
    pub fn mean_afe(&self, estimator: EstimatorKind, sweep_value: f64) -> Option<f64> {
        let name = estimator.to_string();
        self.rows
            .iter()
            .find(|r| r.estimator == name && r.sweep_value == sweep_value)
            .map(|r| r.mean_afe)
    }
}

struct TrialScores {
    afes: Vec<(EstimatorKind, Option<f64>, bool)>, // (kind, afe, failed)
    svd_padded: bool,
}

fn score_trial(
    config: &SweepConfig,
    estimators: &[EstimatorKind],
    k_snap: usize,
    snr_db: f64,
    seed: u64,
) -> Result<TrialScores> {
    let mut rng = rng_from_seed(seed);
    let ubar = OrthonormalBasis::identity_block(config.n, config.p)?;
    let truth = draw_from_prior(
        config.prior,
        &ubar,
        config.kappa,
        config.prior_burnin,
        &mut rng,
    )?;

    let (y, chain): (_, ChainOutput) = match config.model {
        ModelKind::Linear => {
            let sigma2_s = snr_db_to_sigma2_s(snr_db, config.sigma2_n);
            let spec = LinearModelSpec::new(
                ubar.clone(),
                config.kappa,
                config.sigma2_n,
                config.prior,
            )?;
            let y = generate_linear_data(&truth, sigma2_s, config.sigma2_n, k_snap, &mut rng)?;
            let chain = run_lm_chain(&y, &spec, config.n_bi, config.n_r, &mut rng)?;
            (y, chain)
        }
        ModelKind::Covariance => {
            let (g_lo, g_hi) = config.gamma_bounds()?;
            let nu = 1.0 / config.sigma2_n;
            let spec = CovModelSpec::new(
                ubar.clone(),
                config.kappa,
                config.prior,
                nu,
                g_lo,
                g_hi,
            )?;
            let gamma_true: Vec<f64> = (0..config.p)
                .map(|_| g_lo + rand::Rng::random::<f64>(&mut rng) * (g_hi - g_lo))
                .collect();
            let y = generate_cov_data(&truth, &gamma_true, nu, k_snap, &mut rng)?;
            let chain = run_cov_chain(&y, &spec, config.n_bi, config.n_r, &mut rng)?;
            (y, chain)
        }
    };

    let mut afes = Vec::with_capacity(estimators.len());
    let mut svd_padded = false;
    for &kind in estimators {
        let (basis, failed) = match kind {
            EstimatorKind::MmsdClosed => {
                let spec = LinearModelSpec::new(
                    ubar.clone(),
                    config.kappa,
                    config.sigma2_n,
                    config.prior,
                )?;
                (Some(mmsd_closed_form(&y, &spec)?), false)
            }
            EstimatorKind::MmsdMcmc => (Some(mmsd_from_chain(&chain)?), false),
            EstimatorKind::Mmse => {
                let (basis, degenerate) = mmse_from_chain_completed(&chain)?;
                (Some(basis), degenerate.is_some())
            }
            EstimatorKind::Map => match (config.model, config.prior) {
                (ModelKind::Linear, PriorKind::Bingham) => {
                    let spec = LinearModelSpec::new(
                        ubar.clone(),
                        config.kappa,
                        config.sigma2_n,
                        config.prior,
                    )?;
                    (Some(mmsd_closed_form(&y, &spec)?), false)
                }
                _ => (Some(map_from_chain(&chain)?), false),
            },
            EstimatorKind::Svd => {
                let est = svd_estimator(&y, config.p)?;
                svd_padded |= est.padded > 0;
                (Some(est.basis), false)
            }
            EstimatorKind::PriorOnly => (Some(ubar.clone()), false),
        };
        let score = match &basis {
            Some(b) => Some(afe(b, &truth)?),
            None => None,
        };
        afes.push((kind, score, failed));
    }
    Ok(TrialScores { afes, svd_padded })
}

/// Runs the configured sweep and aggregates per-estimator AFE statistics.
///
/// Estimators inside one trial see identical data; per-trial estimator
/// failures are recorded in `n_fail`, not fatal.
pub fn run_afe_sweep(config: &SweepConfig) -> Result<ResultTable> {
    config.validate()?;
    let estimators = config
        .estimators
        .clone()
        .unwrap_or_else(|| config.default_estimators());

    let points: Vec<(usize, f64, f64)> = match &config.sweep {
        SweepVariable::K { grid, snr_db } => grid
            .iter()
            .map(|&k| (k, *snr_db, k as f64))
            .collect(),
        SweepVariable::Snr { grid, k } => grid.iter().map(|&s| (*k, s, s)).collect(),
    };

    let mut rows = Vec::new();
    let mut any_padded = false;
    for (j, &(k_snap, snr_db, sweep_value)) in points.iter().enumerate() {
        let point_seed = child_seed(config.master_seed, j as u64);
        let trials: Vec<TrialScores> = (0..config.n_trials)
            .into_par_iter()
            .map(|t| {
                score_trial(
                    config,
                    &estimators,
                    k_snap,
                    snr_db,
                    child_seed(point_seed, t as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;

        any_padded |= trials.iter().any(|t| t.svd_padded);
        let mut acc: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
        for trial in &trials {
            for (kind, score, failed) in &trial.afes {
                let entry = acc.entry(kind.to_string()).or_default();
                if let Some(v) = score {
                    entry.0.push(*v);
                }
                if *failed {
                    entry.1 += 1;
                }
            }
        }
        for kind in &estimators {
            let (values, n_fail) = acc.remove(&kind.to_string()).unwrap_or_default();
            let m = values.len() as f64;
            let mean = if values.is_empty() {
                f64::NAN
            } else {
                values.iter().sum::<f64>() / m
            };
            let stderr = if values.len() > 1 {
                let var =
                    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
                (var / m).sqrt()
            } else {
                0.0
            };
            rows.push(ResultRow {
                estimator: kind.to_string(),
                sweep_var: config.sweep.name().to_string(),
                sweep_value,
                mean_afe: mean,
                stderr,
                n_fail,
            });
        }
    }
    let mut notes = Vec::new();
    if any_padded {
        notes.push(
            "svd estimates at K < p were completed with the deterministic orthonormal complement"
                .to_string(),
        );
    }
    Ok(ResultTable { rows, notes })
}

/// Configuration of the prior-characterization run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorCharConfig {
    pub n: usize,
    pub p: usize,
    pub kappa_grid: Vec<f64>,
    pub n_draws: usize,
    /// κ at which principal-angle histograms are collected.
    pub hist_kappa: f64,
    #[serde(default = "default_prior_burnin")]
    pub burnin: usize,
    pub master_seed: u64,
}

impl Default for PriorCharConfig {
    fn default() -> Self {
        Self {
            n: 20,
            p: 5,
            kappa_grid: (0..=20).map(|i| 5.0 * i as f64).collect(),
            n_draws: 500,
            hist_kappa: 20.0,
            burnin: default_prior_burnin(),
            master_seed: 0,
        }
    }
}

/// Histogram bin count over `[0, π/2]` for angle distributions.
pub const ANGLE_HIST_BINS: usize = 60;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AfeRow {
    pub prior: String,
    pub kappa: f64,
    pub mean_afe: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AngleHistogram {
    pub prior: String,
    pub kappa: f64,
    /// Counts per bin over `[0, π/2]`, `ANGLE_HIST_BINS` bins.
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorCharacterization {
    pub afe_rows: Vec<AfeRow>,
    pub histograms: Vec<AngleHistogram>,
}

impl PriorCharacterization {
    pub fn write_afe_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "prior,kappa,mean_afe,stderr")?;
        for r in &self.afe_rows {
            writeln!(w, "{},{},{},{}", r.prior, r.kappa, r.mean_afe, r.stderr)?;
        }
        Ok(())
    }

    pub fn write_hist_csv<W: Write>(&self, prior: PriorKind, mut w: W) -> Result<()> {
        writeln!(w, "bin_index,bin_lo,bin_hi,count")?;
        let width = std::f64::consts::FRAC_PI_2 / ANGLE_HIST_BINS as f64;
        for h in self.histograms.iter().filter(|h| h.prior == prior.to_string()) {
            for (i, &c) in h.counts.iter().enumerate() {
                writeln!(w, "{},{},{},{}", i, i as f64 * width, (i + 1) as f64 * width, c)?;
            }
        }
        Ok(())
    }

    pub fn mean_afe(&self, prior: PriorKind, kappa: f64) -> Option<f64> {
        let name = prior.to_string();
        self.afe_rows
            .iter()
            .find(|r| r.prior == name && r.kappa == kappa)
            .map(|r| r.mean_afe)
    }
}

/// Measures the mean AFE toward the prior center as a function of κ for both
/// prior families, plus principal-angle histograms at `hist_kappa`.
///
/// Draws with κ > 0 come from a single Gibbs chain per (prior, κ) pair:
/// `burnin` discarded sweeps followed by `n_draws` consecutive retained
/// sweeps.
pub fn prior_characterization(config: &PriorCharConfig) -> Result<PriorCharacterization> {
    if config.kappa_grid.is_empty() {
        return Err(Error::arg("kappa grid is empty"));
    }
    if config.n_draws < 1 {
        return Err(Error::arg("n_draws must be >= 1"));
    }
    let ubar = OrthonormalBasis::identity_block(config.n, config.p)?;
    let priors = [PriorKind::Bingham, PriorKind::Vmf];

    let jobs: Vec<(usize, PriorKind, f64)> = priors
        .iter()
        .flat_map(|&prior| {
            config
                .kappa_grid
                .iter()
                .map(move |&kappa| (prior, kappa))
        })
        .enumerate()
        .map(|(j, (prior, kappa))| (j, prior, kappa))
        .collect();

    let results: Vec<(AfeRow, Option<AngleHistogram>)> = jobs
        .par_iter()
        .map(|&(j, prior, kappa)| -> Result<_> {
            let mut rng = rng_from_seed(child_seed(config.master_seed, j as u64));
            let mut afes = Vec::with_capacity(config.n_draws);
            let mut hist = if kappa == config.hist_kappa {
                Some(vec![0u64; ANGLE_HIST_BINS])
            } else {
                None
            };
            let record = |u: &OrthonormalBasis, hist: &mut Option<Vec<u64>>| -> Result<f64> {
                if let Some(counts) = hist.as_mut() {
                    let angles = principal_angles(u, &ubar)?;
                    for &t in angles.angles() {
                        let bin = ((t / std::f64::consts::FRAC_PI_2) * ANGLE_HIST_BINS as f64)
                            .floor() as usize;
                        counts[bin.min(ANGLE_HIST_BINS - 1)] += 1;
                    }
                }
                afe(u, &ubar)
            };
            if kappa == 0.0 {
                for _ in 0..config.n_draws {
                    let u = crate::geometry::uniform_stiefel(config.n, config.p, &mut rng)?;
                    afes.push(record(&u, &mut hist)?);
                }
            } else {
                let params = match prior {
                    PriorKind::Bingham => {
                        crate::sampling::BmfParams::bingham(ubar.projector() * kappa, config.p)?
                    }
                    PriorKind::Vmf => crate::sampling::BmfParams::vmf(ubar.matrix() * kappa)?,
                };
                let mut state = ubar.clone();
                for _ in 0..config.burnin {
                    state = crate::sampling::sample_matrix_bmf_sweep(&params, &state, &mut rng)?;
                }
                for _ in 0..config.n_draws {
                    state = crate::sampling::sample_matrix_bmf_sweep(&params, &state, &mut rng)?;
                    afes.push(record(&state, &mut hist)?);
                }
            }
            let m = afes.len() as f64;
            let mean = afes.iter().sum::<f64>() / m;
            let stderr = if afes.len() > 1 {
                (afes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
            } else {
                0.0
            };
            let row = AfeRow {
                prior: prior.to_string(),
                kappa,
                mean_afe: mean,
                stderr,
            };
            let hist = hist.map(|counts| AngleHistogram {
                prior: prior.to_string(),
                kappa,
                counts,
            });
            Ok((row, hist))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut afe_rows = Vec::new();
    let mut histograms = Vec::new();
    for (row, hist) in results {
        afe_rows.push(row);
        if let Some(h) = hist {
            histograms.push(h);
        }
    }
    Ok(PriorCharacterization { afe_rows, histograms })
}

/// Per-chain summary used for convergence checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    /// Squared distance of each retained sample to the chain's own final
    /// estimate (the induced arithmetic mean).
    pub d2_to_iam: Vec<f64>,
    /// Squared distance to the truth, when a truth is supplied.
    pub d2_to_truth: Option<Vec<f64>>,
    /// Recorded unnormalized log-density trace.
    pub log_density: Vec<f64>,
    /// Second-half minus first-half mean log-density.
    pub split_mean_diff: f64,
    /// Standard error of `split_mean_diff`.
    pub split_stderr: f64,
}

impl DiagnosticRecord {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if let Some(truth) = &self.d2_to_truth {
            writeln!(w, "sample,log_density,d2_to_iam,d2_to_truth")?;
            for i in 0..self.log_density.len() {
                writeln!(
                    w,
                    "{},{},{},{}",
                    i, self.log_density[i], self.d2_to_iam[i], truth[i]
                )?;
            }
        } else {
            writeln!(w, "sample,log_density,d2_to_iam")?;
            for i in 0..self.log_density.len() {
                writeln!(w, "{},{},{}", i, self.log_density[i], self.d2_to_iam[i])?;
            }
        }
        Ok(())
    }
}

/// Computes per-sample distance traces and a two-half stationarity
/// statistic for a finished chain. Pure: same chain, same record.
pub fn chain_diagnostics(
    chain: &ChainOutput,
    truth: Option<&OrthonormalBasis>,
) -> Result<DiagnosticRecord> {
    if chain.is_empty() {
        return Err(Error::EmptyChain);
    }
    let iam = mmsd_from_chain(chain)?;
    let mut d2_to_iam = Vec::with_capacity(chain.len());
    let mut d2_to_truth = truth.map(|_| Vec::with_capacity(chain.len()));
    for b in chain.bases() {
        d2_to_iam.push(squared_distance(b, &iam)?);
        if let (Some(acc), Some(t)) = (d2_to_truth.as_mut(), truth) {
            acc.push(squared_distance(b, t)?);
        }
    }
    let ld = chain.log_density();
    let half = ld.len() / 2;
    let (first, second) = (&ld[..half], &ld[half..]);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len().max(1) as f64;
    let var = |xs: &[f64], m: f64| {
        if xs.len() > 1 {
            xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
        } else {
            0.0
        }
    };
    let (m1, m2) = (mean(first), mean(second));
    let split_mean_diff = if half == 0 { 0.0 } else { m2 - m1 };
    let split_stderr = if half == 0 {
        0.0
    } else {
        (var(first, m1) / first.len().max(1) as f64
            + var(second, m2) / second.len().max(1) as f64)
            .sqrt()
    };
    Ok(DiagnosticRecord {
        d2_to_iam,
        d2_to_truth,
        log_density: ld.to_vec(),
        split_mean_diff,
        split_stderr,
    })
}

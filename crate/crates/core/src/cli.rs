//! Command implementations behind the `mmsd` binary.
//!
//! Each command takes a serde-friendly config, runs deterministically for a
//! given `(config, seed)` pair, and writes CSV outputs next to JSON sidecars
//! that embed the exact resolved config. Feeding a sidecar back through
//! `--config` reproduces the run byte for byte, and results do not depend on
//! the worker thread count.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    chain_diagnostics, prior_characterization, run_afe_sweep, ModelKind, PriorCharConfig,
    SweepConfig,
};
use crate::geometry::OrthonormalBasis;
use crate::hyper::{
    generate_gbm_image, global_pca_basis, local_mmsd_map, plugin_noise_variance, read_cube,
    sample_simplex_abundances, synthetic_gamma_map, write_cube, CubeSidecar, EndmemberSet,
    GammaCoeffs, HyperCube,
};
use crate::model::{
    draw_from_prior, generate_cov_data, generate_linear_data, run_cov_chain, run_lm_chain,
    snr_db_to_gamma, snr_db_to_sigma2_s, CovModelSpec, LinearModelSpec, PriorKind,
};
use crate::seeding::rng_from_seed;

/// Exit codes of the binary.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO_FORMAT: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

/// Maps an error to the binary's exit code.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Json(_) | Error::Format { .. } => exit_code::IO_FORMAT,
        Error::InvalidArgument(_) | Error::ShapeMismatch(_) | Error::UnsupportedPrior(_) => {
            exit_code::USAGE
        }
        Error::RankDeficient(_)
        | Error::NotOrthonormal(_)
        | Error::DegenerateMean { .. }
        | Error::EmptyChain => exit_code::NUMERICAL,
    }
}

fn write_sidecar<C: Serialize>(path: &Path, command: &str, config: &C) -> Result<()> {
    let body = serde_json::json!({
        "command": command,
        "config": config,
        "version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(path, serde_json::to_string_pretty(&body)?)?;
    Ok(())
}

/// Loads a config of type `C` from a JSON file. Accepts either a bare
/// config object or a sidecar produced by a previous run (the `config` key
/// is used when present), so outputs are round-trippable.
pub fn load_config<C: serde::de::DeserializeOwned>(path: &Path) -> Result<C> {
    let raw = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&raw)
        .map_err(|e| Error::format("config", format!("invalid JSON: {e}")))?;
    let payload = value.get("config").cloned().unwrap_or(value);
    serde_json::from_value(payload).map_err(|e| Error::format("config", e.to_string()))
}

fn ensure_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// priors
// ---------------------------------------------------------------------------

/// Writes the AFE-vs-κ table and the per-prior principal-angle histograms.
pub fn cmd_priors(config: &PriorCharConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let out = prior_characterization(config)?;
    let mut written = Vec::new();

    let afe_path = out_dir.join("afe_vs_kappa.csv");
    let mut buf = Vec::new();
    out.write_afe_csv(&mut buf)?;
    std::fs::write(&afe_path, &buf)?;
    write_sidecar(&out_dir.join("afe_vs_kappa.meta.json"), "priors", config)?;
    written.push(afe_path);

    for prior in [PriorKind::Bingham, PriorKind::Vmf] {
        let name = format!("angle_hist_{prior}.csv");
        let path = out_dir.join(&name);
        let mut buf = Vec::new();
        out.write_hist_csv(prior, &mut buf)?;
        std::fs::write(&path, &buf)?;
        write_sidecar(
            &out_dir.join(format!("angle_hist_{prior}.meta.json")),
            "priors",
            config,
        )?;
        written.push(path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

/// Stable 64-bit fingerprint (FNV-1a) of a config's canonical JSON.
pub fn config_fingerprint<C: Serialize>(config: &C) -> Result<String> {
    let canon = serde_json::to_string(config)?;
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canon.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    Ok(format!("{hash:016x}"))
}

/// Runs an AFE sweep and writes the results table plus its sidecar.
pub fn cmd_sweep(config: &SweepConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    config.validate()?;
    ensure_out_dir(out_dir)?;
    let started = std::time::Instant::now();
    let table = run_afe_sweep(config)?;
    let wall_time_secs = started.elapsed().as_secs_f64();
    let csv_path = out_dir.join("sweep.csv");
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    std::fs::write(&csv_path, &buf)?;
    let body = serde_json::json!({
        "command": "sweep",
        "config": config,
        "config_fnv1a64": config_fingerprint(config)?,
        "seed": config.master_seed,
        "notes": table.notes,
        "wall_time_secs": wall_time_secs,
        "version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(
        out_dir.join("sweep.meta.json"),
        serde_json::to_string_pretty(&body)?,
    )?;
    Ok(vec![csv_path])
}

// ---------------------------------------------------------------------------
// hyper-synth
// ---------------------------------------------------------------------------

fn default_width() -> usize {
    50
}

fn default_height() -> usize {
    50
}

fn default_bands() -> usize {
    32
}

fn default_endmembers() -> usize {
    3
}

fn default_noise_sigma2() -> f64 {
    2.5e-5
}

/// Config of the synthetic bilinear-mixture scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperSynthConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_height")]
    pub height: usize,
    #[serde(default = "default_bands")]
    pub bands: usize,
    #[serde(default = "default_endmembers")]
    pub endmembers: usize,
    #[serde(default = "default_noise_sigma2")]
    pub noise_sigma2: f64,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for HyperSynthConfig {
    fn default() -> Self {
        Self {
            width: default_width(),
            height: default_height(),
            bands: default_bands(),
            endmembers: default_endmembers(),
            noise_sigma2: default_noise_sigma2(),
            master_seed: 0,
        }
    }
}

/// Builds the synthetic scene used throughout: uniform simplex abundances,
/// three smooth endmembers, and the radial interaction map between the
/// first two endmembers confined to the upper-left quadrant.
pub fn build_synthetic_scene(config: &HyperSynthConfig) -> Result<(HyperCube, Vec<f64>)> {
    if config.endmembers < 2 {
        return Err(Error::arg("synthetic scene needs at least 2 endmembers"));
    }
    if config.endmembers != 3 {
        return Err(Error::arg(
            "the bundled synthetic spectra define exactly 3 endmembers",
        ));
    }
    let mut rng = rng_from_seed(config.master_seed);
    let l = config.width * config.height;
    let em = EndmemberSet::synthetic_three(config.bands)?;
    let ab = sample_simplex_abundances(config.endmembers, l, &mut rng)?;
    let gamma12 = synthetic_gamma_map(config.width, config.height)?;
    let mut gamma = GammaCoeffs::zeros(config.endmembers, l);
    for (pix, &g) in gamma12.iter().enumerate() {
        gamma.set(pix, 0, 1, g);
    }
    let cube = generate_gbm_image(
        &em,
        &ab,
        &gamma,
        config.noise_sigma2,
        config.width,
        config.height,
        &mut rng,
    )?;
    Ok((cube, gamma12))
}

/// Writes the synthetic cube, its format sidecar, and the ground-truth
/// interaction map.
pub fn cmd_hyper_synth(config: &HyperSynthConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let (cube, gamma12) = build_synthetic_scene(config)?;
    let data_path = out_dir.join("cube.f64le");
    let sidecar_path = out_dir.join("cube.json");
    write_cube(&cube, &data_path, &sidecar_path)?;

    let gamma_path = out_dir.join("gamma_true.csv");
    let mut buf = Vec::new();
    {
        use std::io::Write;
        let header: Vec<String> = (0..config.width).map(|c| format!("c{c}")).collect();
        writeln!(buf, "{}", header.join(","))?;
        for row in 0..config.height {
            let cells: Vec<String> = (0..config.width)
                .map(|col| format!("{}", gamma12[row * config.width + col]))
                .collect();
            writeln!(buf, "{}", cells.join(","))?;
        }
    }
    std::fs::write(&gamma_path, &buf)?;
    write_sidecar(&out_dir.join("gamma_true.meta.json"), "hyper-synth", config)?;
    write_sidecar(&out_dir.join("synth.meta.json"), "hyper-synth", config)?;
    Ok(vec![data_path, gamma_path])
}

// ---------------------------------------------------------------------------
// hyper-analyze
// ---------------------------------------------------------------------------

fn default_etas() -> Vec<f64> {
    vec![0.0, 0.5, 50.0]
}

fn default_k_neighbors() -> usize {
    4
}

fn default_subspace_dim() -> usize {
    2
}

/// Config of the nonlinearity analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperAnalyzeConfig {
    /// Raw cube path.
    pub cube: PathBuf,
    /// Sidecar path; defaults to the cube path with a `.json` extension.
    #[serde(default)]
    pub sidecar: Option<PathBuf>,
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "default_k_neighbors")]
    pub k_neighbors: usize,
    #[serde(default = "default_subspace_dim")]
    pub p: usize,
    /// Optional known noise power; otherwise a plug-in estimate from the
    /// trailing covariance eigenvalues is reported in the sidecar.
    #[serde(default)]
    pub sigma2_n: Option<f64>,
}

fn eta_tag(eta: f64) -> String {
    format!("{eta}").replace('.', "_")
}

/// Reads a cube, fits the global basis, and writes one nonlinearity map per
/// requested η.
pub fn cmd_hyper_analyze(config: &HyperAnalyzeConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if config.etas.is_empty() {
        return Err(Error::arg("need at least one eta"));
    }
    ensure_out_dir(out_dir)?;
    let sidecar = config
        .sidecar
        .clone()
        .unwrap_or_else(|| config.cube.with_extension("json"));
    let cube = read_cube(&config.cube, &sidecar)?;
    let ubar = global_pca_basis(&cube, config.p)?;
    let sigma2_n = match config.sigma2_n {
        Some(v) => v,
        None => plugin_noise_variance(&cube, config.p)?,
    };
    let mut written = Vec::new();
    for &eta in &config.etas {
        let map = local_mmsd_map(&cube, &ubar, eta, config.k_neighbors)?;
        let tag = eta_tag(eta);
        let csv_path = out_dir.join(format!("map_eta{tag}.csv"));
        let mut buf = Vec::new();
        map.write_csv(&mut buf)?;
        std::fs::write(&csv_path, &buf)?;
        let body = serde_json::json!({
            "command": "hyper-analyze",
            "config": config,
            "width": map.width,
            "height": map.height,
            "eta": eta,
            "k_neighbors": map.k_neighbors,
            "p": config.p,
            "sigma2_n": sigma2_n,
            "kappa": if sigma2_n > 0.0 { eta / (2.0 * sigma2_n) } else { f64::INFINITY },
            "layout": "csv-grid-row-major",
            "sidecar": CubeSidecar::for_cube(&cube),
            "version": env!("CARGO_PKG_VERSION"),
        });
        std::fs::write(
            out_dir.join(format!("map_eta{tag}.meta.json")),
            serde_json::to_string_pretty(&body)?,
        )?;
        written.push(csv_path);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

fn default_diag_n() -> usize {
    20
}

fn default_diag_p() -> usize {
    5
}

fn default_diag_kappa() -> f64 {
    20.0
}

fn default_diag_k() -> usize {
    5
}

fn default_diag_snr() -> f64 {
    5.0
}

fn default_diag_nbi() -> usize {
    10
}

fn default_diag_nr() -> usize {
    1000
}

fn default_diag_sigma2_n() -> f64 {
    1.0
}

/// Config of a single diagnostic chain run on synthetic data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub model: ModelKind,
    pub prior: PriorKind,
    #[serde(default = "default_diag_n")]
    pub n: usize,
    #[serde(default = "default_diag_p")]
    pub p: usize,
    #[serde(default = "default_diag_kappa")]
    pub kappa: f64,
    #[serde(default = "default_diag_k")]
    pub k: usize,
    /// Linear model: data SNR (dB). Covariance model: window low edge.
    #[serde(default = "default_diag_snr")]
    pub snr_db: f64,
    /// Covariance model: window high edge (dB).
    #[serde(default)]
    pub snr_hi_db: Option<f64>,
    #[serde(default = "default_diag_sigma2_n")]
    pub sigma2_n: f64,
    #[serde(default = "default_diag_nbi")]
    pub n_bi: usize,
    #[serde(default = "default_diag_nr")]
    pub n_r: usize,
    #[serde(default)]
    pub master_seed: u64,
}

/// Generates one synthetic data set, runs the matching chain, and writes
/// the per-sample diagnostic traces plus a stationarity summary.
pub fn cmd_diagnostics(config: &DiagnosticsConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_out_dir(out_dir)?;
    let mut rng = rng_from_seed(config.master_seed);
    let ubar = OrthonormalBasis::identity_block(config.n, config.p)?;
    let truth = draw_from_prior(
        config.prior,
        &ubar,
        config.kappa,
        crate::model::PRIOR_BURNIN_DEFAULT,
        &mut rng,
    )?;
    let chain = match config.model {
        ModelKind::Linear => {
            let spec = LinearModelSpec::new(
                ubar.clone(),
                config.kappa,
                config.sigma2_n,
                config.prior,
            )?;
            let sigma2_s = snr_db_to_sigma2_s(config.snr_db, config.sigma2_n);
            let y = generate_linear_data(&truth, sigma2_s, config.sigma2_n, config.k, &mut rng)?;
            run_lm_chain(&y, &spec, config.n_bi, config.n_r, &mut rng)?
        }
        ModelKind::Covariance => {
            let hi_db = config.snr_hi_db.ok_or_else(|| {
                Error::arg("covariance diagnostics need snr_hi_db")
            })?;
            if !(config.snr_db < hi_db) {
                return Err(Error::arg(format!(
                    "need snr_db < snr_hi_db, got {} and {hi_db}",
                    config.snr_db
                )));
            }
            let nu = 1.0 / config.sigma2_n;
            let (g_lo, g_hi) = (snr_db_to_gamma(hi_db), snr_db_to_gamma(config.snr_db));
            let spec = CovModelSpec::new(ubar.clone(), config.kappa, config.prior, nu, g_lo, g_hi)?;
            let gamma_true: Vec<f64> = (0..config.p)
                .map(|_| g_lo + rand::Rng::random::<f64>(&mut rng) * (g_hi - g_lo))
                .collect();
            let y = generate_cov_data(&truth, &gamma_true, nu, config.k, &mut rng)?;
            run_cov_chain(&y, &spec, config.n_bi, config.n_r, &mut rng)?
        }
    };
    let record = chain_diagnostics(&chain, Some(&truth))?;
    let csv_path = out_dir.join("diagnostics.csv");
    let mut buf = Vec::new();
    record.write_csv(&mut buf)?;
    std::fs::write(&csv_path, &buf)?;
    // The point estimate of γ paired with the subspace estimate is the
    // chain mean (covariance model only).
    let body = serde_json::json!({
        "command": "diagnostics",
        "config": config,
        "split_mean_diff": record.split_mean_diff,
        "split_stderr": record.split_stderr,
        "gamma_mean": chain.mean_gamma(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    std::fs::write(
        out_dir.join("diagnostics.meta.json"),
        serde_json::to_string_pretty(&body)?,
    )?;
    Ok(vec![csv_path])
}

//! Command-line front end for the subspace estimation toolkit.
//!
//! Subcommands: `priors`, `sweep`, `hyper-synth`, `hyper-analyze`,
//! `diagnostics`. Every command is deterministic given its config and seed;
//! outputs are CSV files with JSON sidecars embedding the resolved config.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 io or format error,
//! 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmsd_core::cli::{
    self, cmd_diagnostics, cmd_hyper_analyze, cmd_hyper_synth, cmd_priors, cmd_sweep,
    error_exit_code, load_config, DiagnosticsConfig, HyperAnalyzeConfig, HyperSynthConfig,
};
use mmsd_core::error::{Error, Result};
use mmsd_core::estimator::EstimatorKind;
use mmsd_core::experiment::{ModelKind, PriorCharConfig, SweepConfig, SweepVariable};
use mmsd_core::model::PriorKind;

#[derive(Parser)]
#[command(
    name = "mmsd",
    version,
    about = "Bayesian subspace estimation: benchmarks and hyperspectral nonlinearity maps"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file (a bare config or a sidecar from a previous run).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores). Results are thread-count independent.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Mean fraction of energy versus concentration for both priors, plus
    /// principal-angle histograms.
    Priors(PriorsArgs),
    /// Monte Carlo estimator comparison over a K or SNR grid.
    Sweep(SweepArgs),
    /// Generate the synthetic bilinear-mixture scene.
    HyperSynth(HyperSynthArgs),
    /// Per-pixel nonlinearity distance maps of a cube.
    HyperAnalyze(HyperAnalyzeArgs),
    /// Run one chain on synthetic data and dump convergence traces.
    Diagnostics(DiagnosticsArgs),
}

#[derive(Args)]
struct PriorsArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated κ grid, e.g. "0,5,10,20".
    #[arg(long, value_delimiter = ',')]
    kappa_grid: Option<Vec<f64>>,
    #[arg(long)]
    n_draws: Option<usize>,
    /// κ at which the angle histograms are recorded.
    #[arg(long)]
    hist_kappa: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    /// linear | covariance
    #[arg(long)]
    model: Option<String>,
    /// bingham | vmf
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Swept variable: k | snr
    #[arg(long)]
    sweep: Option<String>,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Fixed SNR in dB (K sweeps).
    #[arg(long)]
    snr_db: Option<f64>,
    /// Fixed snapshot count (SNR sweeps).
    #[arg(long)]
    k: Option<usize>,
    /// Covariance model: SNR window edges in dB.
    #[arg(long)]
    snr_lo_db: Option<f64>,
    #[arg(long)]
    snr_hi_db: Option<f64>,
    #[arg(long)]
    sigma2_n: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    n_bi: Option<usize>,
    #[arg(long)]
    n_r: Option<usize>,
    /// Estimator filter, comma separated (mmsd-closed, mmsd-mcmc, mmse,
    /// map, svd, ubar).
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
}

#[derive(Args)]
struct HyperSynthArgs {
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    noise_sigma2: Option<f64>,
}

#[derive(Args)]
struct HyperAnalyzeArgs {
    /// Raw cube file (little-endian f64, pixel-major).
    #[arg(long)]
    cube: Option<PathBuf>,
    /// Cube sidecar; defaults to the cube path with a .json extension.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Comma-separated η values.
    #[arg(long, value_delimiter = ',')]
    etas: Option<Vec<f64>>,
    /// Neighborhood size K (the pixel plus K-1 nearest neighbors).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Known noise power; defaults to a plug-in estimate.
    #[arg(long)]
    sigma2_n: Option<f64>,
}

#[derive(Args)]
struct DiagnosticsArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long)]
    snr_hi_db: Option<f64>,
    #[arg(long)]
    n_bi: Option<usize>,
    #[arg(long)]
    n_r: Option<usize>,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    if cli.common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
            .map_err(|e| Error::arg(format!("thread pool: {e}")))?;
    }
    let out_dir = cli.common.out_dir.clone();
    match cli.command {
        Command::Priors(args) => {
            let mut config: PriorCharConfig = match &cli.common.config {
                Some(path) => load_config(path)?,
                None => PriorCharConfig::default(),
            };
            if let Some(v) = args.n {
                config.n = v;
            }
            if let Some(v) = args.p {
                config.p = v;
            }
            if let Some(v) = args.kappa_grid {
                config.kappa_grid = v;
            }
            if let Some(v) = args.n_draws {
                config.n_draws = v;
            }
            if let Some(v) = args.hist_kappa {
                config.hist_kappa = v;
            }
            if let Some(seed) = cli.common.seed {
                config.master_seed = seed;
            }
            if config.kappa_grid.is_empty() {
                return Err(Error::arg("kappa grid is empty"));
            }
            cmd_priors(&config, &out_dir)
        }
        Command::Sweep(args) => {
            let mut config: SweepConfig = match &cli.common.config {
                Some(path) => load_config(path)?,
                None => default_sweep_config(),
            };
            if let Some(v) = &args.model {
                config.model = v.parse()?;
            }
            if let Some(v) = &args.prior {
                config.prior = v.parse()?;
            }
            if let Some(v) = args.n {
                config.n = v;
            }
            if let Some(v) = args.p {
                config.p = v;
            }
            if let Some(v) = args.kappa {
                config.kappa = v;
            }
            if args.sweep.is_some() || args.grid.is_some() {
                let which = args.sweep.as_deref().unwrap_or("k").to_ascii_lowercase();
                let grid = args.grid.clone().unwrap_or_default();
                config.sweep = match which.as_str() {
                    "k" => SweepVariable::K {
                        grid: grid.iter().map(|&v| v as usize).collect(),
                        snr_db: args.snr_db.unwrap_or(5.0),
                    },
                    "snr" => SweepVariable::Snr {
                        grid,
                        k: args.k.unwrap_or(5),
                    },
                    other => {
                        return Err(Error::arg(format!(
                            "unknown sweep variable `{other}` (valid: k, snr)"
                        )))
                    }
                };
            } else if let Some(snr) = args.snr_db {
                if let SweepVariable::K { grid, .. } = &config.sweep {
                    config.sweep = SweepVariable::K {
                        grid: grid.clone(),
                        snr_db: snr,
                    };
                }
            }
            if let Some(v) = args.snr_lo_db {
                config.snr_lo_db = Some(v);
            }
            if let Some(v) = args.snr_hi_db {
                config.snr_hi_db = Some(v);
            }
            if let Some(v) = args.sigma2_n {
                config.sigma2_n = v;
            }
            if let Some(v) = args.trials {
                config.n_trials = v;
            }
            if let Some(v) = args.n_bi {
                config.n_bi = v;
            }
            if let Some(v) = args.n_r {
                config.n_r = v;
            }
            if let Some(names) = &args.estimators {
                let kinds: Result<Vec<EstimatorKind>> =
                    names.iter().map(|s| s.parse()).collect();
                config.estimators = Some(kinds?);
            }
            if let Some(seed) = cli.common.seed {
                config.master_seed = seed;
            }
            cmd_sweep(&config, &out_dir)
        }
        Command::HyperSynth(args) => {
            let mut config: HyperSynthConfig = match &cli.common.config {
                Some(path) => load_config(path)?,
                None => HyperSynthConfig::default(),
            };
            if let Some(v) = args.width {
                config.width = v;
            }
            if let Some(v) = args.height {
                config.height = v;
            }
            if let Some(v) = args.bands {
                config.bands = v;
            }
            if let Some(v) = args.noise_sigma2 {
                config.noise_sigma2 = v;
            }
            if let Some(seed) = cli.common.seed {
                config.master_seed = seed;
            }
            cmd_hyper_synth(&config, &out_dir)
        }
        Command::HyperAnalyze(args) => {
            let mut config: HyperAnalyzeConfig = match &cli.common.config {
                Some(path) => load_config(path)?,
                None => {
                    let cube = args.cube.clone().ok_or_else(|| {
                        Error::arg("hyper-analyze needs --cube or --config")
                    })?;
                    HyperAnalyzeConfig {
                        cube,
                        sidecar: None,
                        etas: vec![0.0, 0.5, 50.0],
                        k_neighbors: 4,
                        p: 2,
                        sigma2_n: None,
                    }
                }
            };
            if let Some(v) = args.cube {
                config.cube = v;
            }
            if let Some(v) = args.sidecar {
                config.sidecar = Some(v);
            }
            if let Some(v) = args.etas {
                config.etas = v;
            }
            if let Some(v) = args.k {
                config.k_neighbors = v;
            }
            if let Some(v) = args.p {
                config.p = v;
            }
            if let Some(v) = args.sigma2_n {
                config.sigma2_n = Some(v);
            }
            cmd_hyper_analyze(&config, &out_dir)
        }
        Command::Diagnostics(args) => {
            let mut config: DiagnosticsConfig = match &cli.common.config {
                Some(path) => load_config(path)?,
                None => DiagnosticsConfig {
                    model: ModelKind::Linear,
                    prior: PriorKind::Bingham,
                    n: 20,
                    p: 5,
                    kappa: 20.0,
                    k: 5,
                    snr_db: 5.0,
                    snr_hi_db: None,
                    sigma2_n: 1.0,
                    n_bi: 10,
                    n_r: 1000,
                    master_seed: 0,
                },
            };
            if let Some(v) = &args.model {
                config.model = v.parse()?;
            }
            if let Some(v) = &args.prior {
                config.prior = v.parse()?;
            }
            if let Some(v) = args.n {
                config.n = v;
            }
            if let Some(v) = args.p {
                config.p = v;
            }
            if let Some(v) = args.kappa {
                config.kappa = v;
            }
            if let Some(v) = args.k {
                config.k = v;
            }
            if let Some(v) = args.snr_db {
                config.snr_db = v;
            }
            if let Some(v) = args.snr_hi_db {
                config.snr_hi_db = Some(v);
            }
            if let Some(v) = args.n_bi {
                config.n_bi = v;
            }
            if let Some(v) = args.n_r {
                config.n_r = v;
            }
            if let Some(seed) = cli.common.seed {
                config.master_seed = seed;
            }
            cmd_diagnostics(&config, &out_dir)
        }
    }
}

/// Benchmark defaults: N=20, p=5, κ=20, SNR=5 dB, K grid through p and
/// beyond.
fn default_sweep_config() -> SweepConfig {
    SweepConfig {
        model: ModelKind::Linear,
        prior: PriorKind::Bingham,
        n: 20,
        p: 5,
        kappa: 20.0,
        sweep: SweepVariable::K {
            grid: vec![2, 5, 10, 20],
            snr_db: 5.0,
        },
        sigma2_n: 1.0,
        snr_lo_db: None,
        snr_hi_db: None,
        n_trials: 50,
        n_bi: 10,
        n_r: 200,
        prior_burnin: mmsd_core::model::PRIOR_BURNIN_DEFAULT,
        master_seed: 0,
        estimators: None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::from(cli::exit_code::SUCCESS as u8)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(error_exit_code(&err) as u8)
        }
    }
}

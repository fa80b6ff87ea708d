pub mod config;
pub mod manifest;
pub mod stages;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

pub use config::Config;
pub use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spotgrid::Error),

    #[error("{0}")]
    Config(String),

    #[error("missing artifact {path}: run {stage} first")]
    MissingArtifact { path: String, stage: &'static str },

    #[error("{0}: {1}")]
    Io(String, std::io::Error),
}

impl CliError {
    /// 2 for bad inputs, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_validation() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spotgrid", version, about = "Regional spot-price models: fit, forecast, event studies and backtests")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory (overrides `run_dir`).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    pub master_seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate CSV extracts and copy them into the run directory.
    Ingest {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Write a synthetic dataset and its latent truth.
    Generate {
        #[arg(long)]
        periods: Option<usize>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the monotone regressions (one pair, or every pair).
    Fit {
        #[arg(long, requires = "price_region")]
        supply_region: Option<String>,
        #[arg(long, requires = "supply_region")]
        price_region: Option<String>,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        training: Option<usize>,
    },
    /// Fit the per-supply-region copulas on the regression residuals.
    Copula {
        /// Fixed lags, comma separated; BIC selection when absent.
        #[arg(long, value_delimiter = ',')]
        lags: Option<Vec<usize>>,
    },
    /// Ensemble predictive distributions from an origin.
    Forecast {
        #[arg(long)]
        origin: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<config::ForecastMode>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dump_draws: bool,
    },
    /// Supply-shock and price-impulse studies.
    Event {
        #[command(subcommand)]
        kind: EventCommand,
    },
    /// Backtest the six forecasting methods.
    Validate {
        #[arg(long)]
        origins: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Auto-dependence (Kendall tau) matrices of each fitted copula.
    Deps {
        #[arg(long, value_delimiter = ',')]
        lags: Option<Vec<usize>>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EventCommand {
    /// Shift one region's supply curves and report expected-price changes.
    SupplyShock {
        #[arg(long)]
        region: String,
        #[arg(long, allow_hyphen_values = true)]
        mwh: f64,
        #[arg(long)]
        at: String,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Add a dollar impulse to one region's prices over a window.
    Impulse {
        #[arg(long)]
        region: String,
        #[arg(long, allow_hyphen_values = true)]
        dollars: f64,
        /// `FIRST..LAST`, both inclusive (timestamps or indices).
        #[arg(long)]
        window: String,
        #[arg(long)]
        horizon: usize,
        /// Supply-region model to use; the shocked region's by default.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Resolves the configuration (file, then flags) and runs one command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(d) = cli.run_dir {
        cfg.run_dir = d;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if let Some(s) = cli.master_seed {
        cfg.seed = s;
    }
    if let Some(n) = cfg.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    stages::dispatch(cfg, cli.command)
}

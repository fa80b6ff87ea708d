use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use spotgrid::backtest::Method;
use spotgrid::forecast::OptimizerConfig;
use spotgrid::market::TransformSpec;
use spotgrid::mcmc::SamplerConfig;
use spotgrid::model::LagSpec;

use crate::CliError;

/// Whole-pipeline configuration. Every section is optional; command-line
/// flags override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Directory holding every stage's artifacts and the manifest.
    pub run_dir: PathBuf,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// Master seed; stage seeds derive from it unless set explicitly.
    pub seed: u64,
    pub data: DataConfig,
    pub generate: GenerateConfig,
    pub fit: FitConfig,
    pub copula: CopulaConfig,
    pub forecast: ForecastConfig,
    pub event: EventConfig,
    pub validate: ValidateConfig,
    pub deps: DepsConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            run_dir: PathBuf::from("run"),
            threads: None,
            seed: 1,
            data: DataConfig::default(),
            generate: GenerateConfig::default(),
            fit: FitConfig::default(),
            copula: CopulaConfig::default(),
            forecast: ForecastConfig::default(),
            event: EventConfig::default(),
            validate: ValidateConfig::default(),
            deps: DepsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory with prices.csv, loads.csv, flows.csv and optionally
    /// losses.csv.
    pub dir: Option<PathBuf>,
    /// Network description (TOML); the built-in NEM topology when absent.
    pub network: Option<PathBuf>,
    pub lenient_complementarity: bool,
    pub transform: TransformSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// JSON generator spec; the NEM preset when absent.
    pub spec: Option<PathBuf>,
    pub periods: usize,
    pub seed: Option<u64>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            spec: None,
            periods: 2000,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Number of leading periods used for fitting; all when absent.
    pub training: Option<usize>,
    /// Sampler seed; derived from the master seed when absent. The
    /// sampler table's own `seed` field is ignored.
    pub seed: Option<u64>,
    pub sampler: SamplerConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CopulaConfig {
    /// Fixed lag set; BIC selection when absent.
    pub lags: Option<Vec<usize>>,
}

impl CopulaConfig {
    pub fn lag_spec(&self) -> LagSpec {
        match &self.lags {
            Some(l) => LagSpec::Fixed(l.clone()),
            None => LagSpec::Select,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    /// Supplies and flows taken as known over the horizon.
    Conditional,
    /// Flows chosen by the price-gap optimizer given loads.
    Joint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastConfig {
    /// First forecast period (timestamp or index); the period right after
    /// training when absent.
    pub origin: Option<String>,
    pub horizon: usize,
    pub mode: ForecastMode,
    pub draws: usize,
    pub seed: Option<u64>,
    pub weights: Option<Vec<f64>>,
    pub quantiles: Vec<f64>,
    /// Also write the raw predictive draws as little-endian f64.
    pub dump_draws: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        ForecastConfig {
            origin: None,
            horizon: 48,
            mode: ForecastMode::Conditional,
            draws: 1000,
            seed: None,
            weights: None,
            quantiles: vec![0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99],
            dump_draws: false,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub draws: usize,
    pub seed: Option<u64>,
    pub quantiles: Vec<f64>,
    /// Horizon steps (1-based) at which impulse densities are tabulated.
    pub density_steps: Vec<usize>,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            draws: 2000,
            seed: None,
            quantiles: vec![0.05, 0.5, 0.95],
            density_steps: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    /// Average this many consecutive periods before backtesting (2 turns
    /// half-hourly data hourly).
    pub aggregate: usize,
    /// Explicit origins (timestamps or indices of the aggregated data).
    pub origins: Option<Vec<String>>,
    /// Daily origins at the end of the data when `origins` is absent.
    pub origin_count: usize,
    pub horizon: usize,
    pub methods: Vec<Method>,
    pub draws: usize,
    pub seed: Option<u64>,
    pub refit: bool,
    pub optimizer: OptimizerConfig,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            aggregate: 2,
            origins: None,
            origin_count: 20,
            horizon: 168,
            methods: Method::ALL.to_vec(),
            draws: 500,
            seed: None,
            refit: false,
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepsConfig {
    pub lags: Vec<usize>,
}

impl Default for DepsConfig {
    fn default() -> Self {
        DepsConfig {
            lags: vec![0, 1, 2, 48],
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        toml::from_str(s).map_err(|e| CliError::Config(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    /// Digest of the resolved settings. The run directory and thread count
    /// are left out: neither changes any output.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.run_dir = PathBuf::new();
        c.threads = None;
        crate::manifest::sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use spotgrid::backtest::{run_backtest, BacktestConfig};
use spotgrid::copula::auto_dependence;
use spotgrid::events::{density_report, expected_price, impulse_response, supply_shock, PriceShock};
use spotgrid::forecast::{conditional_forecast, joint_forecast, ForecastOptions, ForecastSet, HorizonInputs, LoadInputs};
use spotgrid::market::{format_timestamp, ingest_csv, parse_timestamp, write_csv, DataPaths, IngestOptions, MarketNetwork, PanelDataset};
use spotgrid::mcmc::{fit_regression, RegressionFit};
use spotgrid::model::{fit_all_regressions, fit_copulas, ModelConfig, ModelSet};
use spotgrid::stats::derive_seed;
use spotgrid::synth::{generate, GeneratorSpec};

use crate::config::{Config, ForecastMode};
use crate::manifest::{file_digest, sha256_hex, RunManifest, StageRecord};
use crate::{CliError, Command, EventCommand};

pub const DATA_DIR: &str = "data";
pub const DATA_META: &str = "data/meta.json";
pub const TRUTH: &str = "truth.json";
pub const REGRESSIONS: &str = "fit/regressions.json";
pub const MODELS: &str = "models.json";
pub const FORECAST: &str = "forecast/forecast.csv";
pub const FORECAST_FLOWS: &str = "forecast/flows.csv";
pub const BACKTEST: &str = "validate/backtest.csv";
pub const DEPS: &str = "deps/deps.csv";

const DATA_STAGE: &str = "`ingest` or `generate`";

// Tags mixed into the master seed per stage.
const GENERATE_TAG: u64 = 1;
const FIT_TAG: u64 = 2;
const FORECAST_TAG: u64 = 3;
const EVENT_TAG: u64 = 4;
const VALIDATE_TAG: u64 = 5;

/// Network and ingest settings stored next to the canonical CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataMeta {
    pub network: MarketNetwork,
    pub options: IngestOptions,
}

/// Regressions for every (supply, price) pair plus the training length
/// they were fitted on.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionSet {
    pub training_len: usize,
    pub fits: Vec<Vec<RegressionFit>>,
}

struct Stage<'a> {
    cfg: &'a Config,
    name: &'static str,
    manifest: RunManifest,
    seed: Option<u64>,
    start: Instant,
}

impl<'a> Stage<'a> {
    fn begin(cfg: &'a Config, name: &'static str) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.run_dir).map_err(|e| CliError::Io(cfg.run_dir.display().to_string(), e))?;
        info!("stage {name} in {}", cfg.run_dir.display());
        Ok(Stage {
            cfg,
            name,
            manifest: RunManifest::load_or_new(&cfg.run_dir)?,
            seed: None,
            start: Instant::now(),
        })
    }

    fn seed(&mut self, explicit: Option<u64>, tag: u64) -> u64 {
        let s = explicit.unwrap_or_else(|| derive_seed(self.cfg.seed, tag));
        self.seed = Some(s);
        s
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.run_dir.join(rel)
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        self.manifest.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let s = serde_json::to_string_pretty(value).map_err(spotgrid::Error::from)?;
        self.write(rel, s.as_bytes())
    }

    /// Records an artifact written by someone else (e.g. the CSV writer).
    fn record(&mut self, rel: &str) -> Result<(), CliError> {
        let d = file_digest(&self.path(rel))?;
        self.manifest.outputs.insert(rel.to_string(), d);
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let d = file_digest(path)?;
        self.manifest.inputs.insert(path.display().to_string(), d);
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        let seconds = self.start.elapsed().as_secs_f64();
        let hash = self.cfg.digest();
        if let Some(s) = self.seed {
            self.manifest.seeds.insert(self.name.to_string(), s);
        }
        self.manifest.config_hash = hash.clone();
        self.manifest.stages.push(StageRecord {
            stage: self.name.to_string(),
            config_hash: hash,
            seed: self.seed,
            threads: self.cfg.threads,
            seconds,
        });
        self.manifest.save(&self.cfg.run_dir)?;
        info!("stage {} done in {seconds:.2}s", self.name);
        Ok(())
    }
}

fn read_artifact<T: for<'de> Deserialize<'de>>(cfg: &Config, rel: &str, stage: &'static str) -> Result<T, CliError> {
    let path = cfg.run_dir.join(rel);
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            path: path.display().to_string(),
            stage,
        });
    }
    let s = std::fs::read_to_string(&path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    serde_json::from_str(&s).map_err(|e| CliError::Config(format!("corrupt artifact {}: {e}", path.display())))
}

pub fn load_data(cfg: &Config) -> Result<PanelDataset, CliError> {
    let meta: DataMeta = read_artifact(cfg, DATA_META, DATA_STAGE)?;
    let paths = DataPaths::in_dir(&cfg.run_dir.join(DATA_DIR));
    Ok(ingest_csv(&paths, &meta.network, &meta.options)?)
}

pub fn load_models(cfg: &Config) -> Result<ModelSet, CliError> {
    read_artifact(cfg, MODELS, "`copula`")
}

fn store_data(stage: &mut Stage, data: &PanelDataset, options: IngestOptions) -> Result<(), CliError> {
    write_csv(data, &stage.path(DATA_DIR))?;
    for f in ["prices.csv", "loads.csv", "flows.csv", "losses.csv"] {
        stage.record(&format!("{DATA_DIR}/{f}"))?;
    }
    stage.write_json(
        DATA_META,
        &DataMeta {
            network: data.network().clone(),
            options,
        },
    )
}

/// A period given as an index or as a timestamp present in the data.
pub fn resolve_period(data: &PanelDataset, s: &str) -> Result<usize, CliError> {
    if let Ok(i) = s.trim().parse::<usize>() {
        return if i < data.len() {
            Ok(i)
        } else {
            Err(CliError::Config(format!("period {i} beyond the data ({} periods)", data.len())))
        };
    }
    let t = parse_timestamp(s).ok_or_else(|| CliError::Config(format!("`{s}` is neither an index nor a timestamp")))?;
    data.timestamps()
        .binary_search(&t)
        .map_err(|_| CliError::Config(format!("timestamp {s} not in the data")))
}

fn csv_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".into()
    }
}

pub fn dispatch(mut cfg: Config, command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest { data_dir, network } => {
            if data_dir.is_some() {
                cfg.data.dir = data_dir;
            }
            if network.is_some() {
                cfg.data.network = network;
            }
            ingest(&cfg)
        }
        Command::Generate { periods, spec, seed } => {
            if let Some(p) = periods {
                cfg.generate.periods = p;
            }
            if spec.is_some() {
                cfg.generate.spec = spec;
            }
            if seed.is_some() {
                cfg.generate.seed = seed;
            }
            generate_stage(&cfg)
        }
        Command::Fit {
            supply_region,
            price_region,
            sweeps,
            burn_in,
            seed,
            training,
        } => {
            if let Some(s) = sweeps {
                cfg.fit.sampler.sweeps = s;
            }
            if let Some(b) = burn_in {
                cfg.fit.sampler.burn_in = b;
            }
            if seed.is_some() {
                cfg.fit.seed = seed;
            }
            if training.is_some() {
                cfg.fit.training = training;
            }
            match (supply_region, price_region) {
                (Some(i), Some(j)) => fit_pair(&cfg, &i, &j),
                _ => fit(&cfg),
            }
        }
        Command::Copula { lags } => {
            if lags.is_some() {
                cfg.copula.lags = lags;
            }
            copula(&cfg)
        }
        Command::Forecast {
            origin,
            horizon,
            mode,
            draws,
            seed,
            dump_draws,
        } => {
            let f = &mut cfg.forecast;
            if origin.is_some() {
                f.origin = origin;
            }
            if let Some(h) = horizon {
                f.horizon = h;
            }
            if let Some(m) = mode {
                f.mode = m;
            }
            if let Some(d) = draws {
                f.draws = d;
            }
            if seed.is_some() {
                f.seed = seed;
            }
            f.dump_draws |= dump_draws;
            forecast(&cfg)
        }
        Command::Event { kind } => match kind {
            EventCommand::SupplyShock { region, mwh, at, sim } => {
                apply_sim(&mut cfg, sim.draws, sim.seed);
                event_supply_shock(&cfg, &region, mwh, &at)
            }
            EventCommand::Impulse {
                region,
                dollars,
                window,
                horizon,
                model,
                sim,
            } => {
                apply_sim(&mut cfg, sim.draws, sim.seed);
                event_impulse(&cfg, &region, dollars, &window, horizon, model.as_deref())
            }
        },
        Command::Validate {
            origins,
            horizon,
            draws,
            seed,
        } => {
            let v = &mut cfg.validate;
            if let Some(o) = origins {
                v.origins = None;
                v.origin_count = o;
            }
            if let Some(h) = horizon {
                v.horizon = h;
            }
            if let Some(d) = draws {
                v.draws = d;
            }
            if seed.is_some() {
                v.seed = seed;
            }
            validate(&cfg)
        }
        Command::Deps { lags } => {
            if let Some(l) = lags {
                cfg.deps.lags = l;
            }
            deps(&cfg)
        }
    }
}

fn apply_sim(cfg: &mut Config, draws: Option<usize>, seed: Option<u64>) {
    if let Some(d) = draws {
        cfg.event.draws = d;
    }
    if seed.is_some() {
        cfg.event.seed = seed;
    }
}

pub fn ingest(cfg: &Config) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "ingest")?;
    let dir = cfg
        .data
        .dir
        .clone()
        .ok_or_else(|| CliError::Config("ingest needs a data directory (`data.dir` or --data-dir)".into()))?;
    let network = match &cfg.data.network {
        Some(p) => {
            stage.input(p)?;
            let s = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.display().to_string(), e))?;
            MarketNetwork::from_toml_str(&s)?
        }
        None => MarketNetwork::nem(),
    };
    let paths = DataPaths::in_dir(&dir);
    for p in [&paths.prices, &paths.loads, &paths.flows].into_iter().chain(paths.losses.as_ref()) {
        stage.input(p)?;
    }
    let options = IngestOptions {
        lenient_complementarity: cfg.data.lenient_complementarity,
        transform: cfg.data.transform,
    };
    let data = ingest_csv(&paths, &network, &options)?;
    info!("ingested {} periods for {} regions", data.len(), network.n_regions());
    store_data(&mut stage, &data, options)?;
    stage.finish()
}

pub fn generate_stage(cfg: &Config) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "generate")?;
    let seed = stage.seed(cfg.generate.seed, GENERATE_TAG);
    let spec = match &cfg.generate.spec {
        Some(p) => {
            stage.input(p)?;
            let s = std::fs::read_to_string(p).map_err(|e| CliError::Io(p.display().to_string(), e))?;
            let mut spec: GeneratorSpec =
                serde_json::from_str(&s).map_err(|e| CliError::Config(format!("malformed generator spec {}: {e}", p.display())))?;
            spec.seed = seed;
            spec
        }
        None => GeneratorSpec::nem(cfg.generate.periods, seed),
    };
    let (data, truth) = generate(&spec)?;
    if truth.clipped > 0 {
        warn!("{} generated prices clipped at the cap", truth.clipped);
    }
    store_data(
        &mut stage,
        &data,
        IngestOptions {
            lenient_complementarity: false,
            transform: spec.transform,
        },
    )?;
    stage.write_json(TRUTH, &truth)?;
    stage.finish()
}

fn training_data(cfg: &Config, data: &PanelDataset) -> Result<PanelDataset, CliError> {
    match cfg.fit.training {
        Some(n) => Ok(data.slice(0..n)?),
        None => Ok(data.clone()),
    }
}

fn sampler_config(cfg: &Config, seed: u64) -> spotgrid::mcmc::SamplerConfig {
    let mut s = cfg.fit.sampler.clone();
    s.seed = seed;
    s
}

pub fn fit(cfg: &Config) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "fit")?;
    let seed = stage.seed(cfg.fit.seed, FIT_TAG);
    let data = load_data(cfg)?;
    let train = training_data(cfg, &data)?;
    let fits = fit_all_regressions(&train, &sampler_config(cfg, seed))?;
    for f in fits.iter().flatten() {
        for w in &f.diagnostics.warnings {
            warn!("{}->{}: {w}", f.supply_region, f.price_region);
        }
    }
    stage.write_json(
        REGRESSIONS,
        &RegressionSet {
            training_len: train.len(),
            fits,
        },
    )?;
    stage.finish()
}

pub fn fit_pair(cfg: &Config, supply: &str, price: &str) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "fit")?;
    let seed = stage.seed(cfg.fit.seed, FIT_TAG);
    let data = load_data(cfg)?;
    let train = training_data(cfg, &data)?;
    let net = train.network();
    let (i, j) = (net.region_index(supply)?, net.region_index(price)?);
    let f = fit_regression(&train, i, j, &sampler_config(cfg, seed), true)?;
    stage.write_json(&format!("fit/fit_{supply}_{price}.json"), &f)?;
    stage.finish()
}

pub fn copula(cfg: &Config) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "copula")?;
    let data = load_data(cfg)?;
    let regs: RegressionSet = read_artifact(cfg, REGRESSIONS, "`fit`")?;
    let train = data.slice(0..regs.training_len)?;
    let models = fit_copulas(&train, regs.fits, &cfg.copula.lag_spec())?;
    for m in &models.models {
        info!(
            "copula for {} supply: lags {:?}, radius {:.4}",
            m.supply_region,
            m.copula.lags,
            m.copula.spectral_radius()
        );
        for w in &m.copula.warnings {
            warn!("{}: {w}", m.supply_region);
        }
    }
    stage.write_json(MODELS, &models)?;
    stage.finish()
}

fn forecast_csv(set: &ForecastSet, data: &PanelDataset, quantiles: &[f64]) -> String {
    let spec = data.transform();
    let mut out = String::from("h,timestamp,region,mean_log_price,expected_price");
    for p in quantiles {
        write!(out, ",q{}", p * 100.0).unwrap();
    }
    out.push('\n');
    for h in 0..set.horizon {
        let ts = format_timestamp(&data.timestamps()[set.origin + h]);
        for (j, region) in set.regions.iter().enumerate() {
            let price: f64 = set
                .weights
                .iter()
                .zip(&set.draws)
                .map(|(w, d)| w * expected_price(&d.column(h, j), spec).0)
                .sum();
            write!(out, "{},{ts},{region},{},{}", h + 1, csv_num(set.ensemble_mean(h, j)), csv_num(price)).unwrap();
            for &p in quantiles {
                write!(out, ",{}", csv_num(set.ensemble_quantile(h, j, p))).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn forecast(cfg: &Config) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "forecast")?;
    let seed = stage.seed(cfg.forecast.seed, FORECAST_TAG);
    let fc = &cfg.forecast;
    if fc.quantiles.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(CliError::Config("forecast quantiles must lie in (0,1)".into()));
    }
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    let origin = match &fc.origin {
        Some(s) => resolve_period(&data, s)?,
        None => models.training_len,
    };
    let opts = ForecastOptions {
        horizon: fc.horizon,
        n_draws: fc.draws,
        seed,
        weights: fc.weights.clone(),
    };
    let set = match fc.mode {
        ForecastMode::Conditional => {
            let inputs = HorizonInputs::observed(&data, origin, fc.horizon)?;
            conditional_forecast(&models, &data, origin, &inputs, &opts)?
        }
        ForecastMode::Joint => {
            let loads = LoadInputs::observed(&data, origin, fc.horizon)?;
            let (set, sols) = joint_forecast(&models, &data, origin, &loads, &opts, &fc.optimizer)?;
            let net = data.network();
            let mut out = String::from("model,h");
            for a in net.arcs() {
                write!(out, ",{}", a.id).unwrap();
            }
            out.push_str(",objective,baseline\n");
            for (m, row) in models.models.iter().zip(&sols) {
                for (h, s) in row.iter().enumerate() {
                    write!(out, "{},{}", m.supply_region, h + 1).unwrap();
                    for v in &s.flows {
                        write!(out, ",{}", csv_num(*v)).unwrap();
                    }
                    writeln!(out, ",{},{}", csv_num(s.objective), csv_num(s.baseline)).unwrap();
                }
            }
            stage.write(FORECAST_FLOWS, out.as_bytes())?;
            set
        }
    };
    stage.write(FORECAST, forecast_csv(&set, &data, &fc.quantiles).as_bytes())?;
    if fc.dump_draws {
        for (m, d) in models.models.iter().zip(&set.draws) {
            let bytes: Vec<u8> = d.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            stage.write(&format!("forecast/draws_{}.bin", m.supply_region), &bytes)?;
        }
    }
    stage.finish()
}

pub fn event_supply_shock(cfg: &Config, region: &str, mwh: f64, at: &str) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "event-supply-shock")?;
    let seed = stage.seed(cfg.event.seed, EVENT_TAG);
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    models.check_compatible(&data)?;
    let i = data.network().region_index(region)?;
    let t = resolve_period(&data, at)?;
    let rep = supply_shock(&models.models[i], &data, t, mwh, cfg.event.draws, seed)?;
    let mut out = String::from("supply_region,timestamp,mwh,region,baseline,shocked,delta\n");
    let ts = format_timestamp(&data.timestamps()[t]);
    for (j, r) in rep.regions.iter().enumerate() {
        writeln!(
            out,
            "{region},{ts},{mwh},{r},{},{},{}",
            csv_num(rep.baseline[j]),
            csv_num(rep.shocked[j]),
            csv_num(rep.delta[j])
        )
        .unwrap();
    }
    stage.write(&format!("events/supply_shock_{region}.csv"), out.as_bytes())?;
    stage.finish()
}

/// Observed horizon inputs where the data reach, the last observed values
/// held constant beyond.
fn persisted_inputs(data: &PanelDataset, origin: usize, horizon: usize) -> HorizonInputs {
    let last = data.len() - 1;
    let at = |s: &Vec<f64>| (0..horizon).map(|h| s[(origin + h).min(last)]).collect();
    HorizonInputs {
        supply: data.supply().iter().map(at).collect(),
        flows: data.flow().iter().map(at).collect(),
    }
}

pub fn event_impulse(cfg: &Config, region: &str, dollars: f64, window: &str, horizon: usize, model: Option<&str>) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "event-impulse")?;
    let seed = stage.seed(cfg.event.seed, EVENT_TAG);
    let data = load_data(cfg)?;
    let models = load_models(cfg)?;
    models.check_compatible(&data)?;
    let net = data.network();
    let j = net.region_index(region)?;
    let i = net.region_index(model.unwrap_or(region))?;
    let (a, b) = window
        .split_once("..")
        .ok_or_else(|| CliError::Config(format!("window `{window}` must be FIRST..LAST")))?;
    let (first, last) = (resolve_period(&data, a)?, resolve_period(&data, b)?);
    if last < first {
        return Err(CliError::Config(format!("window `{window}` ends before it starts")));
    }
    let shock = PriceShock {
        region: j,
        dollars,
        window: first..last + 1,
    };
    let inputs = persisted_inputs(&data, last + 1, horizon);
    let ir = impulse_response(&models.models[i], &data, &shock, &inputs, horizon, cfg.event.draws, seed)?;
    let qs = &cfg.event.quantiles;
    let mut out = String::from("h,region,delta_log_mean,delta_price_mean,delta_price_se");
    for p in qs {
        write!(out, ",dq{}", p * 100.0).unwrap();
    }
    out.push('\n');
    for h in 0..horizon {
        for (k, r) in net.regions().iter().enumerate() {
            write!(
                out,
                "{},{r},{},{},{}",
                h + 1,
                csv_num(ir.delta_log_mean(h, k)),
                csv_num(ir.delta_price_mean(h, k)),
                csv_num(ir.delta_price_se(h, k))
            )
            .unwrap();
            for &p in qs {
                write!(out, ",{}", csv_num(ir.delta_quantile(h, k, p))).unwrap();
            }
            out.push('\n');
        }
    }
    stage.write(&format!("events/impulse_{region}.csv"), out.as_bytes())?;
    let spec = data.transform();
    for &h in &cfg.event.density_steps {
        if h == 0 || h > horizon {
            return Err(CliError::Config(format!("density step {h} outside 1..={horizon}")));
        }
        let mut out = String::from("series,x,density,bandwidth\n");
        for (name, draws) in [("baseline", &ir.baseline), ("shocked", &ir.shocked)] {
            let prices: Vec<f64> = draws.column(h - 1, j).iter().map(|v| spec.price(v.min(spec.log_cap()))).collect();
            let rep = density_report(&prices);
            for ((x, d), bw) in rep.x.iter().zip(&rep.density).zip(&rep.bandwidth) {
                writeln!(out, "{name},{},{},{}", csv_num(*x), csv_num(*d), csv_num(*bw)).unwrap();
            }
        }
        stage.write(&format!("events/impulse_{region}_density_h{h}.csv"), out.as_bytes())?;
    }
    stage.finish()
}

pub fn validate(cfg: &Config) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "validate")?;
    let seed = stage.seed(cfg.validate.seed, VALIDATE_TAG);
    let v = &cfg.validate;
    let raw = load_data(cfg)?;
    let data = if v.aggregate > 1 { raw.aggregate(v.aggregate)? } else { raw };
    let origins = match &v.origins {
        Some(list) => list.iter().map(|s| resolve_period(&data, s)).collect::<Result<Vec<_>, _>>()?,
        None => BacktestConfig::daily_origins(&data, v.origin_count, v.horizon),
    };
    let fit_seed = cfg.fit.seed.unwrap_or_else(|| derive_seed(cfg.seed, FIT_TAG));
    let bt = BacktestConfig {
        origins,
        horizon: v.horizon,
        methods: v.methods.clone(),
        n_draws: v.draws,
        seed,
        refit: v.refit,
        model: ModelConfig {
            sampler: sampler_config(cfg, fit_seed),
            lags: cfg.copula.lag_spec(),
        },
        optimizer: v.optimizer,
    };
    bt.validate(&data)?;
    let res = run_backtest(&data, &bt)?;
    for f in &res.failures {
        warn!("backtest: {f}");
    }
    stage.write(BACKTEST, res.to_csv().as_bytes())?;
    stage.finish()
}

pub fn deps(cfg: &Config) -> Result<(), CliError> {
    let mut stage = Stage::begin(cfg, "deps")?;
    let models = load_models(cfg)?;
    let mut out = String::from("supply_region,h,region,lagged_region,tau\n");
    for m in &models.models {
        for &h in &cfg.deps.lags {
            let t = auto_dependence(&m.copula, h)?;
            for (a, ra) in models.regions.iter().enumerate() {
                for (b, rb) in models.regions.iter().enumerate() {
                    writeln!(out, "{},{h},{ra},{rb},{}", m.supply_region, csv_num(t[(a, b)])).unwrap();
                }
            }
        }
    }
    stage.write(DEPS, out.as_bytes())?;
    stage.finish()
}

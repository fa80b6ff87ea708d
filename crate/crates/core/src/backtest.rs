//! Expanding-window point-forecast comparison on the demand-weighted log
//! price.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{compute_copula_data, latent_history, select_and_fit, fit_var, simulate_forward, CopulaModel, MarginalTransform};
use crate::error::{Error, Result};
use crate::forecast::{conditional_forecast, fundamental_forecast, joint_forecast, ForecastOptions, HorizonInputs, LoadInputs, OptimizerConfig};
use crate::market::PanelDataset;
use crate::mcmc::MixtureParams;
use crate::model::{fit_models, LagSpec, ModelConfig, ModelSet};
use crate::stats;

/// Horizon buckets in hours, inclusive.
pub const BUCKETS: [(usize, usize); 12] = [
    (1, 1),
    (2, 2),
    (3, 3),
    (4, 6),
    (7, 12),
    (13, 24),
    (25, 48),
    (49, 72),
    (73, 96),
    (97, 120),
    (121, 144),
    (145, 168),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive1,
    Naive2,
    Fundamental,
    Copula,
    CopulaFundamental1,
    CopulaFundamental2,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Naive1,
        Method::Naive2,
        Method::Fundamental,
        Method::Copula,
        Method::CopulaFundamental1,
        Method::CopulaFundamental2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Naive1 => "naive1",
            Method::Naive2 => "naive2",
            Method::Fundamental => "fundamental",
            Method::Copula => "copula",
            Method::CopulaFundamental1 => "copula_fundamental_1",
            Method::CopulaFundamental2 => "copula_fundamental_2",
        }
    }
}

pub fn bucket_label(b: (usize, usize)) -> String {
    if b.0 == b.1 {
        b.0.to_string()
    } else {
        format!("{}-{}", b.0, b.1)
    }
}

/// Log price at the same clock time on the last observed day. `h` is
/// 1-based; horizons past one day wrap to the same clock time.
pub fn naive1(data: &PanelDataset, origin: usize, h: usize, region: usize) -> Result<f64> {
    let ppd = data.periods_per_day();
    if origin < ppd || h == 0 {
        return Err(Error::InsufficientData { needed: ppd, got: origin });
    }
    Ok(data.log_price()[region][origin - ppd + (h - 1) % ppd])
}

/// Mean log price at the same clock time over all periods before `origin`.
pub fn naive2(data: &PanelDataset, origin: usize, h: usize, region: usize) -> Result<f64> {
    let ppd = data.periods_per_day();
    if origin == 0 || h == 0 {
        return Err(Error::InsufficientData { needed: 1, got: origin });
    }
    let phase = (origin + h - 1) % ppd;
    let vals: Vec<f64> = (phase..origin).step_by(ppd).map(|t| data.log_price()[region][t]).collect();
    if vals.is_empty() {
        return Err(Error::InsufficientData { needed: ppd, got: origin });
    }
    Ok(stats::mean(&vals))
}

/// Demand weights `d_l / sum_j d_j` at period `t`; they sum to one.
pub fn demand_shares(data: &PanelDataset, t: usize) -> Vec<f64> {
    let total: f64 = data.load().iter().map(|l| l[t]).sum();
    let w: Vec<f64> = data.load().iter().map(|l| l[t] / total).collect();
    debug_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    w
}

/// Copula model of the log prices themselves: margins are their empirical
/// distributions (normal tails), no regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceCopula {
    pub transforms: Vec<MarginalTransform>,
    pub copula: CopulaModel,
}

pub fn fit_price_copula(data: &PanelDataset, lags: &LagSpec) -> Result<PriceCopula> {
    let series: Vec<Vec<f64>> = data.log_price().to_vec();
    let tails: Vec<MixtureParams> = series
        .iter()
        .map(|s| MixtureParams::single(stats::mean(s), stats::variance(s).sqrt().max(1e-9)))
        .collect();
    let (transforms, cd) = compute_copula_data(series, &tails)?;
    let copula = match lags {
        LagSpec::Select => select_and_fit(&cd.w, data.periods_per_day())?,
        LagSpec::Fixed(l) => fit_var(&cd.w, l)?,
    };
    Ok(PriceCopula { transforms, copula })
}

impl PriceCopula {
    /// Predictive means `[h][region]` of the log prices.
    pub fn forecast_means(&self, data: &PanelDataset, origin: usize, horizon: usize, n_draws: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let p = self.copula.order();
        if origin < p {
            return Err(Error::InsufficientData { needed: p, got: origin });
        }
        let hist: Vec<Vec<f64>> = data.log_price().iter().map(|s| s[origin - p..origin].to_vec()).collect();
        let w = latent_history(&self.transforms, &hist)?;
        let d = simulate_forward(&self.copula, &self.transforms, &w, horizon, n_draws, seed)?;
        Ok((0..horizon).map(|h| (0..d.r).map(|j| d.mean(h, j)).collect()).collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    /// Forecast origins as period indices (first forecast period).
    pub origins: Vec<usize>,
    /// Horizon in periods of the dataset.
    pub horizon: usize,
    pub methods: Vec<Method>,
    pub n_draws: usize,
    pub seed: u64,
    /// Refit every model at each origin instead of once on the data before
    /// the first origin.
    pub refit: bool,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            origins: Vec::new(),
            horizon: 168,
            methods: Method::ALL.to_vec(),
            n_draws: 500,
            seed: 1,
            refit: false,
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl BacktestConfig {
    /// `count` daily origins ending so the last horizon fits in the data.
    pub fn daily_origins(data: &PanelDataset, count: usize, horizon: usize) -> Vec<usize> {
        let ppd = data.periods_per_day();
        let last = data.len().saturating_sub(horizon);
        let last = last - last % ppd;
        (0..count).rev().filter_map(|k| last.checked_sub(k * ppd)).collect()
    }

    pub fn validate(&self, data: &PanelDataset) -> Result<()> {
        if self.origins.is_empty() || self.methods.is_empty() || self.horizon == 0 {
            return Err(Error::Config("backtest needs origins, methods and a positive horizon".into()));
        }
        let first = *self.origins.iter().min().unwrap();
        let last = *self.origins.iter().max().unwrap();
        let ppd = data.periods_per_day();
        if first < 2 * 7 * ppd + 1 {
            return Err(Error::InsufficientData {
                needed: 2 * 7 * ppd + 1,
                got: first,
            });
        }
        if last + self.horizon > data.len() {
            return Err(Error::InsufficientData {
                needed: last + self.horizon,
                got: data.len(),
            });
        }
        if ppd % 24 != 0 {
            return Err(Error::Config("backtest buckets need at least hourly data".into()));
        }
        Ok(())
    }
}

/// Per-method absolute errors for one origin, `[h]`; `None` marks a method
/// that failed at this origin.
type OriginErrors = Vec<(Method, Option<Vec<f64>>)>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestResult {
    pub methods: Vec<Method>,
    pub buckets: Vec<String>,
    /// MAFE x 100 per `[method][bucket]`; `None` where a method failed.
    pub mafe: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
    pub failures: Vec<String>,
}

impl BacktestResult {
    pub fn get(&self, m: Method, bucket: usize) -> Option<f64> {
        let k = self.methods.iter().position(|x| *x == m)?;
        self.mafe[k][bucket]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method");
        for b in &self.buckets {
            s.push(',');
            s.push_str(b);
        }
        s.push('\n');
        for (m, row) in self.methods.iter().zip(&self.mafe) {
            s.push_str(m.name());
            for v in row {
                s.push(',');
                match v {
                    Some(x) => s.push_str(&format!("{x:.3}")),
                    None => s.push_str("NA"),
                }
            }
            s.push('\n');
        }
        s
    }
}

struct Fitted {
    models: Option<ModelSet>,
    price_copula: Option<PriceCopula>,
}

fn fit_for(data: &PanelDataset, end: usize, cfg: &BacktestConfig) -> Result<Fitted> {
    let train = data.slice(0..end)?;
    let need_models = cfg
        .methods
        .iter()
        .any(|m| matches!(m, Method::Fundamental | Method::CopulaFundamental1 | Method::CopulaFundamental2));
    let models = if need_models { Some(fit_models(&train, &cfg.model)?) } else { None };
    let price_copula = if cfg.methods.contains(&Method::Copula) {
        Some(fit_price_copula(&train, &cfg.model.lags)?)
    } else {
        None
    };
    Ok(Fitted { models, price_copula })
}

fn method_forecast(m: Method, data: &PanelDataset, fitted: &Fitted, origin: usize, cfg: &BacktestConfig) -> Result<Vec<Vec<f64>>> {
    let h_max = cfg.horizon;
    let r = data.network().n_regions();
    let seed = stats::derive_seed(cfg.seed, origin as u64);
    let models = || fitted.models.as_ref().ok_or_else(|| Error::MissingModel("regression models".into()));
    let opts = ForecastOptions {
        horizon: h_max,
        n_draws: cfg.n_draws,
        seed,
        weights: None,
    };
    match m {
        Method::Naive1 => (1..=h_max).map(|h| (0..r).map(|j| naive1(data, origin, h, j)).collect()).collect(),
        Method::Naive2 => (1..=h_max).map(|h| (0..r).map(|j| naive2(data, origin, h, j)).collect()).collect(),
        Method::Fundamental => {
            let inputs = HorizonInputs::observed(data, origin, h_max)?;
            fundamental_forecast(models()?, &inputs, h_max, None)
        }
        Method::Copula => fitted
            .price_copula
            .as_ref()
            .ok_or_else(|| Error::MissingModel("price copula".into()))?
            .forecast_means(data, origin, h_max, cfg.n_draws, seed),
        Method::CopulaFundamental1 => {
            let inputs = HorizonInputs::observed(data, origin, h_max)?;
            Ok(conditional_forecast(models()?, data, origin, &inputs, &opts)?.point_forecasts())
        }
        Method::CopulaFundamental2 => {
            let loads = LoadInputs::observed(data, origin, h_max)?;
            Ok(joint_forecast(models()?, data, origin, &loads, &opts, &cfg.optimizer)?.0.point_forecasts())
        }
    }
}

/// Absolute errors of the demand-weighted log price for each method at one
/// origin.
fn origin_errors(data: &PanelDataset, fitted: &Fitted, origin: usize, cfg: &BacktestConfig) -> OriginErrors {
    cfg.methods
        .iter()
        .map(|&m| {
            let errs = method_forecast(m, data, fitted, origin, cfg).map(|fc| {
                fc.iter()
                    .enumerate()
                    .map(|(h, row)| {
                        let t = origin + h;
                        let w = demand_shares(data, t);
                        let pred: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum();
                        let actual: f64 = w.iter().zip(data.log_price()).map(|(a, s)| a * s[t]).sum();
                        (pred - actual).abs()
                    })
                    .collect()
            });
            match errs {
                Ok(e) => (m, Some(e)),
                Err(e) => {
                    log::warn!("{} failed at origin {origin}: {e}", m.name());
                    (m, None)
                }
            }
        })
        .collect()
}

/// Runs the backtest. Models are fitted once on the data before the first
/// origin unless `refit` is set.
pub fn run_backtest(data: &PanelDataset, cfg: &BacktestConfig) -> Result<BacktestResult> {
    cfg.validate(data)?;
    let first = *cfg.origins.iter().min().unwrap();
    let shared = if cfg.refit { None } else { Some(fit_for(data, first, cfg)?) };
    let per_origin: Vec<(usize, Result<OriginErrors>)> = cfg
        .origins
        .par_iter()
        .map(|&o| {
            let res = match &shared {
                Some(f) => Ok(origin_errors(data, f, o, cfg)),
                None => fit_for(data, o, cfg).map(|f| origin_errors(data, &f, o, cfg)),
            };
            (o, res)
        })
        .collect();
    Ok(aggregate(data, cfg, per_origin))
}

fn aggregate(data: &PanelDataset, cfg: &BacktestConfig, mut per_origin: Vec<(usize, Result<OriginErrors>)>) -> BacktestResult {
    // fixed summation order, so the table does not depend on origin order
    per_origin.sort_by_key(|(o, _)| *o);
    let steps_per_hour = data.periods_per_day() / 24;
    let nm = cfg.methods.len();
    let mut sums = vec![vec![0.0; BUCKETS.len()]; nm];
    let mut counts = vec![vec![0usize; BUCKETS.len()]; nm];
    let mut failed = vec![vec![false; BUCKETS.len()]; nm];
    let mut failures = Vec::new();
    for (origin, res) in per_origin {
        match res {
            Err(e) => {
                failures.push(format!("origin {origin}: {e}"));
                for row in failed.iter_mut() {
                    row.iter_mut().for_each(|f| *f = true);
                }
            }
            Ok(errs) => {
                for (k, (m, e)) in errs.into_iter().enumerate() {
                    let Some(e) = e else {
                        failures.push(format!("origin {origin}: {} failed", m.name()));
                        failed[k].iter_mut().for_each(|f| *f = true);
                        continue;
                    };
                    for (h, v) in e.iter().enumerate() {
                        let hour = h / steps_per_hour + 1;
                        if let Some(b) = BUCKETS.iter().position(|&(lo, hi)| hour >= lo && hour <= hi) {
                            sums[k][b] += v;
                            counts[k][b] += 1;
                        }
                    }
                }
            }
        }
    }
    let mafe = (0..nm)
        .map(|k| {
            (0..BUCKETS.len())
                .map(|b| (!failed[k][b] && counts[k][b] > 0).then(|| 100.0 * sums[k][b] / counts[k][b] as f64))
                .collect()
        })
        .collect();
    BacktestResult {
        methods: cfg.methods.clone(),
        buckets: BUCKETS.iter().map(|&b| bucket_label(b)).collect(),
        mafe,
        counts,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{IngestOptions, MarketNetwork, Arc};
    use chrono::{Duration, NaiveDate};

    fn toy(prices: Vec<f64>) -> PanelDataset {
        let n = prices.len();
        let net = MarketNetwork::new(vec!["R".into()], Vec::<Arc>::new(), vec![]).unwrap();
        let t0 = NaiveDate::from_ymd_opt(2011, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let stamps = (0..n).map(|k| t0 + Duration::hours(k as i64)).collect();
        PanelDataset::new(net, stamps, vec![prices], vec![vec![100.0; n]], vec![], None, &IngestOptions::default()).unwrap()
    }

    #[test]
    fn naive_rules_on_three_days() {
        let prices: Vec<f64> = (0..72).map(|k| k as f64).collect();
        let data = toy(prices);
        let lp = |t: usize| data.log_price()[0][t];
        // origin at the start of day 3
        assert_eq!(naive1(&data, 48, 1, 0).unwrap(), lp(24));
        assert_eq!(naive1(&data, 48, 24, 0).unwrap(), lp(47));
        assert_eq!(naive1(&data, 48, 25, 0).unwrap(), naive1(&data, 48, 1, 0).unwrap());
        assert_eq!(naive2(&data, 48, 1, 0).unwrap(), 0.5 * (lp(0) + lp(24)));
        // origin mid-day: clock time 05:00 for h=1 at origin 29
        assert_eq!(naive2(&data, 29, 1, 0).unwrap(), lp(5));
        assert_eq!(naive1(&data, 29, 1, 0).unwrap(), lp(5));
    }

    #[test]
    fn naive2_matches_group_by() {
        let prices: Vec<f64> = (0..24 * 9).map(|k| ((k * 37) % 101) as f64).collect();
        let data = toy(prices);
        for origin in [200, 213] {
            for h in [1, 5, 30] {
                let clock = (origin + h - 1) % 24;
                let group: Vec<f64> = (0..origin).filter(|t| t % 24 == clock).map(|t| data.log_price()[0][t]).collect();
                assert!((naive2(&data, origin, h, 0).unwrap() - stats::mean(&group)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_series_naives_are_exact() {
        let data = toy(vec![55.0; 24 * 5]);
        let v = data.log_price()[0][0];
        assert_eq!(naive1(&data, 60, 7, 0).unwrap(), v);
        assert!((naive2(&data, 60, 30, 0).unwrap() - v).abs() < 1e-12);
    }

    #[test]
    fn mafe_scaling_and_bucket_sizes() {
        let data = toy(vec![10.0; 24 * 30]);
        let cfg = BacktestConfig {
            origins: vec![24 * 15, 24 * 16, 24 * 17],
            horizon: 168,
            methods: vec![Method::Naive1],
            ..Default::default()
        };
        // a single error of 0.5 at h=1 per origin
        let per_origin = cfg
            .origins
            .iter()
            .map(|&o| {
                let mut e = vec![0.0; 168];
                e[0] = 0.5;
                (o, Ok(vec![(Method::Naive1, Some(e))]))
            })
            .collect();
        let res = aggregate(&data, &cfg, per_origin);
        assert_eq!(res.mafe[0][0], Some(50.0));
        assert_eq!(res.mafe[0][1], Some(0.0));
        assert_eq!(res.counts[0][3], 3 * 3);
        assert_eq!(res.counts[0][11], 24 * 3);
        assert!(res.to_csv().starts_with("method,1,2,3,4-6"));
    }

    #[test]
    fn perfect_forecast_has_zero_mafe() {
        let data = toy(vec![42.0; 24 * 30]);
        let cfg = BacktestConfig {
            origins: vec![24 * 20, 24 * 21],
            horizon: 168,
            methods: vec![Method::Naive1, Method::Naive2],
            ..Default::default()
        };
        let res = run_backtest(&data, &cfg).unwrap();
        for row in &res.mafe {
            for v in row {
                assert!(v.unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn order_of_origins_does_not_matter() {
        let prices: Vec<f64> = (0..24 * 30).map(|k| 30.0 + ((k * 13) % 17) as f64).collect();
        let data = toy(prices);
        let mut cfg = BacktestConfig {
            origins: vec![24 * 15, 24 * 18, 24 * 20],
            horizon: 48,
            methods: vec![Method::Naive1, Method::Naive2],
            ..Default::default()
        };
        let a = run_backtest(&data, &cfg).unwrap();
        cfg.origins.reverse();
        let b = run_backtest(&data, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }
}

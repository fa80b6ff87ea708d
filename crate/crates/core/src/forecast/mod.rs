//! Predictive distributions per supply region and their equal-weight
//! ensemble.

pub mod flows;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use flows::{demand_weights, gap_objective, optimize_flows, regional_balance, FlowSolution, OptimizerConfig};

use crate::copula::{simulate_forward, Draws};
use crate::error::{Error, Result};
use crate::market::PanelDataset;
use crate::model::{ModelSet, SupplyModel};
use crate::stats;

/// Supply and flows over the forecast horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonInputs {
    /// `[region][h]`
    pub supply: Vec<Vec<f64>>,
    /// `[arc][h]`
    pub flows: Vec<Vec<f64>>,
}

impl HorizonInputs {
    /// The realized supply and flows for `origin..origin+horizon`.
    pub fn observed(data: &PanelDataset, origin: usize, horizon: usize) -> Result<Self> {
        if origin + horizon > data.len() {
            return Err(Error::InsufficientData {
                needed: origin + horizon,
                got: data.len(),
            });
        }
        let r = origin..origin + horizon;
        Ok(HorizonInputs {
            supply: data.supply().iter().map(|s| s[r.clone()].to_vec()).collect(),
            flows: data.flow().iter().map(|f| f[r.clone()].to_vec()).collect(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.supply.first().map_or(0, |s| s.len())
    }

    fn flows_at(&self, h: usize) -> Vec<f64> {
        self.flows.iter().map(|f| f[h]).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastOptions {
    pub horizon: usize,
    pub n_draws: usize,
    pub seed: u64,
    /// Ensemble weights; `None` means `1/r` each.
    pub weights: Option<Vec<f64>>,
}

impl Default for ForecastOptions {
    fn default() -> Self {
        ForecastOptions {
            horizon: 48,
            n_draws: 1000,
            seed: 1,
            weights: None,
        }
    }
}

impl ForecastOptions {
    fn weights(&self, r: usize) -> Result<Vec<f64>> {
        let w = self.weights.clone().unwrap_or_else(|| vec![1.0 / r as f64; r]);
        if w.len() != r || w.iter().any(|&x| !(x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("ensemble weights {w:?} must be {r} nonnegative values summing to 1")));
        }
        Ok(w)
    }
}

/// Log-price draws from each supply region's model plus the ensemble
/// weights.
#[derive(Debug, Clone)]
pub struct ForecastSet {
    pub origin: usize,
    pub horizon: usize,
    pub regions: Vec<String>,
    pub weights: Vec<f64>,
    /// Regression means `[model][h][price region]`.
    pub eta: Vec<Vec<Vec<f64>>>,
    /// Log-price draws per model.
    pub draws: Vec<Draws>,
}

impl ForecastSet {
    pub fn model_mean(&self, i: usize, h: usize, j: usize) -> f64 {
        self.draws[i].mean(h, j)
    }

    /// `sum_i W_i E^{(i)}(pi_{j,T+h})`.
    pub fn ensemble_mean(&self, h: usize, j: usize) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(i, w)| w * self.model_mean(i, h, j))
            .sum()
    }

    /// Point forecasts `[h][region]`.
    pub fn point_forecasts(&self) -> Vec<Vec<f64>> {
        (0..self.horizon)
            .map(|h| (0..self.regions.len()).map(|j| self.ensemble_mean(h, j)).collect())
            .collect()
    }

    /// Ensemble predictive CDF at `x` (weighted pooling of draws).
    pub fn ensemble_cdf(&self, h: usize, j: usize, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.draws)
            .map(|(w, d)| {
                let below = (0..d.n_draws).filter(|&k| d.get(k, h, j) <= x).count();
                w * below as f64 / d.n_draws as f64
            })
            .sum()
    }

    /// Ensemble predictive quantile from the weighted pooled draws.
    pub fn ensemble_quantile(&self, h: usize, j: usize, p: f64) -> f64 {
        let mut pooled: Vec<(f64, f64)> = Vec::new();
        for (w, d) in self.weights.iter().zip(&self.draws) {
            if *w > 0.0 {
                pooled.extend((0..d.n_draws).map(|k| (d.get(k, h, j), w / d.n_draws as f64)));
            }
        }
        pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = 0.0;
        for &(x, w) in &pooled {
            cum += w;
            if cum >= p - 1e-12 {
                return x;
            }
        }
        pooled.last().map_or(f64::NAN, |v| v.0)
    }
}

fn model_eta(model: &SupplyModel, inputs: &HorizonInputs) -> Vec<Vec<f64>> {
    let evals: Vec<_> = model.fits.iter().map(|f| f.evaluator()).collect();
    (0..inputs.horizon())
        .map(|h| {
            let flows = inputs.flows_at(h);
            let b = inputs.supply[model.supply_index][h];
            evals.iter().map(|e| e.eta(b, &flows)).collect()
        })
        .collect()
}

/// Predictive draws with model-specific horizon inputs (one per supply
/// region, or a single shared entry).
pub fn forecast_with_inputs(
    models: &ModelSet,
    data: &PanelDataset,
    origin: usize,
    inputs: &[HorizonInputs],
    opts: &ForecastOptions,
) -> Result<ForecastSet> {
    models.check_compatible(data)?;
    let r = models.r();
    if models.models.len() != r {
        return Err(Error::MissingModel(format!("{} of {r} supply-region models present", models.models.len())));
    }
    if inputs.len() != 1 && inputs.len() != r {
        return Err(Error::Validation("horizon inputs must be shared or one per model".into()));
    }
    for inp in inputs {
        if inp.horizon() < opts.horizon || inp.supply.len() != r || inp.flows.len() != data.network().n_arcs() {
            return Err(Error::Validation(format!(
                "horizon inputs cover {} periods; {} requested",
                inp.horizon(),
                opts.horizon
            )));
        }
    }
    let weights = opts.weights(r)?;
    let results: Vec<(Vec<Vec<f64>>, Draws)> = models
        .models
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let inp = &inputs[if inputs.len() == 1 { 0 } else { i }];
            let eta = model_eta(m, inp);
            let history = m.latent_history(data, origin)?;
            let seed = stats::derive_seed(opts.seed, i as u64);
            let mut draws = simulate_forward(&m.copula, &m.transforms, &history, opts.horizon, opts.n_draws, seed)?;
            for d in 0..draws.n_draws {
                for h in 0..opts.horizon {
                    for j in 0..r {
                        draws.data[(d * opts.horizon + h) * r + j] += eta[h][j];
                    }
                }
            }
            Ok((eta, draws))
        })
        .collect::<Result<_>>()?;
    let (eta, draws) = results.into_iter().unzip();
    Ok(ForecastSet {
        origin,
        horizon: opts.horizon,
        regions: models.regions.clone(),
        weights,
        eta,
        draws,
    })
}

/// Predictive distribution given known supply and flows over the horizon.
pub fn conditional_forecast(
    models: &ModelSet,
    data: &PanelDataset,
    origin: usize,
    inputs: &HorizonInputs,
    opts: &ForecastOptions,
) -> Result<ForecastSet> {
    forecast_with_inputs(models, data, origin, std::slice::from_ref(inputs), opts)
}

/// Expected log price per region under model `m` (regression mean plus
/// mixture mean), as a function of the model's own supply and the flows.
pub fn expected_prices(m: &SupplyModel) -> impl Fn(f64, &[f64]) -> Vec<f64> {
    let evals: Vec<_> = m.fits.iter().map(|f| f.evaluator()).collect();
    let means = m.disturbance_means();
    move |b, flows| evals.iter().zip(&means).map(|(e, a)| e.eta(b, flows) + a).collect()
}

/// Loads and loss adjustments over the horizon, `[region][h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadInputs {
    pub load: Vec<Vec<f64>>,
    pub loss: Vec<Vec<f64>>,
}

impl LoadInputs {
    pub fn observed(data: &PanelDataset, origin: usize, horizon: usize) -> Result<Self> {
        if origin + horizon > data.len() {
            return Err(Error::InsufficientData {
                needed: origin + horizon,
                got: data.len(),
            });
        }
        let r = origin..origin + horizon;
        Ok(LoadInputs {
            load: data.load().iter().map(|s| s[r.clone()].to_vec()).collect(),
            loss: data.loss_adj().iter().map(|s| s[r.clone()].to_vec()).collect(),
        })
    }
}

/// Flows solved per horizon step and supply-region model, `[model][h]`.
pub fn solve_horizon_flows(
    models: &ModelSet,
    data: &PanelDataset,
    loads: &LoadInputs,
    horizon: usize,
    cfg: &OptimizerConfig,
) -> Result<Vec<Vec<FlowSolution>>> {
    let net = data.network();
    if loads.load.iter().chain(&loads.loss).any(|v| v.len() < horizon) {
        return Err(Error::Validation("load inputs shorter than the horizon".into()));
    }
    models
        .models
        .par_iter()
        .map(|m| {
            let prices = expected_prices(m);
            (0..horizon)
                .map(|h| {
                    let d: Vec<f64> = loads.load.iter().map(|l| l[h]).collect();
                    let loss: Vec<f64> = loads.loss.iter().map(|l| l[h]).collect();
                    optimize_flows(net, m.supply_index, &d, &loss, &prices, cfg)
                })
                .collect()
        })
        .collect()
}

/// Forecast with flows and supplies chosen by the price-gap optimizer.
pub fn joint_forecast(
    models: &ModelSet,
    data: &PanelDataset,
    origin: usize,
    loads: &LoadInputs,
    opts: &ForecastOptions,
    cfg: &OptimizerConfig,
) -> Result<(ForecastSet, Vec<Vec<FlowSolution>>)> {
    let solutions = solve_horizon_flows(models, data, loads, opts.horizon, cfg)?;
    let inputs: Vec<HorizonInputs> = solutions
        .iter()
        .map(|sols| HorizonInputs {
            supply: (0..models.r()).map(|k| sols.iter().map(|s| s.supply[k]).collect()).collect(),
            flows: (0..data.network().n_arcs()).map(|a| sols.iter().map(|s| s.flows[a]).collect()).collect(),
        })
        .collect();
    let set = forecast_with_inputs(models, data, origin, &inputs, opts)?;
    Ok((set, solutions))
}

/// Point forecast `eta + E(eps)` with the disturbances treated as
/// independent; `[h][region]`.
pub fn fundamental_forecast(models: &ModelSet, inputs: &HorizonInputs, horizon: usize, weights: Option<&[f64]>) -> Result<Vec<Vec<f64>>> {
    let r = models.r();
    let w = ForecastOptions {
        weights: weights.map(|w| w.to_vec()),
        ..Default::default()
    }
    .weights(r)?;
    let mut out = vec![vec![0.0; r]; horizon];
    for (m, wi) in models.models.iter().zip(&w) {
        if *wi == 0.0 {
            continue;
        }
        let prices = expected_prices(m);
        for (h, row) in out.iter_mut().enumerate() {
            let a = prices(inputs.supply[m.supply_index][h], &inputs.flows_at(h));
            for (o, v) in row.iter_mut().zip(a) {
                *o += wi * v;
            }
        }
    }
    Ok(out)
}

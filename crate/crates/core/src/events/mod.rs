//! Supply shocks through shifted supply curves and price impulses through
//! the copula.

pub mod kde;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use kde::{density_report, DensityReport};

use crate::copula::{latent_history, simulate_forward, Draws};
use crate::error::{Error, Result};
use crate::forecast::HorizonInputs;
use crate::market::{PanelDataset, TransformSpec};
use crate::mcmc::{MixtureParams, RegressionFit};
use crate::model::SupplyModel;
use crate::stats;

/// Model with every supply curve evaluated at `b + mwh`.
pub fn shift_supply(model: &SupplyModel, mwh: f64) -> SupplyModel {
    let mut out = model.clone();
    out.fits = model.fits.iter().map(|f| f.with_supply_shift(mwh)).collect();
    out
}

/// Mean of exponentiated log-price draws minus the floor offset. Draws above
/// the log of ten times the price cap are clipped; the count of clipped
/// draws is returned alongside.
pub fn expected_price(draws: &[f64], spec: &TransformSpec) -> (f64, usize) {
    let cap = spec.log_cap();
    let mut clipped = 0;
    let total: f64 = draws
        .iter()
        .map(|&d| {
            if d > cap {
                clipped += 1;
                cap.exp()
            } else {
                d.exp()
            }
        })
        .sum();
    if clipped > 0 {
        log::warn!("{clipped} draws clipped at ln(10 x price cap)");
    }
    (total / draws.len() as f64 - spec.floor_offset, clipped)
}

/// Draws from a normal mixture using one uniform for the component and one
/// normal per draw, so two mixtures sampled with the same seed share their
/// random numbers.
pub fn mixture_draws(mix: &MixtureParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stats::stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            let l = if u < mix.weights[0] {
                0
            } else if u < mix.weights[0] + mix.weights[1] {
                1
            } else {
                2
            };
            mix.means[l] + mix.sds[l] * z
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupplyShockReport {
    pub supply_region: String,
    pub t: usize,
    pub mwh: f64,
    pub regions: Vec<String>,
    /// Expected $/MWh per price region without and with the shock.
    pub baseline: Vec<f64>,
    pub shocked: Vec<f64>,
    pub delta: Vec<f64>,
}

fn marginal_expected_price(fit: &RegressionFit, eta: f64, spec: &TransformSpec, n: usize, seed: u64) -> f64 {
    let draws: Vec<f64> = mixture_draws(&fit.mixture, n, seed).into_iter().map(|e| eta + e).collect();
    expected_price(&draws, spec).0
}

/// Marginal expected prices at period `t` with and without shifting the
/// supply curves of `model` by `mwh`. Both sides reuse the same disturbance
/// draws.
pub fn supply_shock(model: &SupplyModel, data: &PanelDataset, t: usize, mwh: f64, n_draws: usize, seed: u64) -> Result<SupplyShockReport> {
    if t >= data.len() {
        return Err(Error::Validation(format!("period {t} beyond the data ({} periods)", data.len())));
    }
    let shocked_model = shift_supply(model, mwh);
    let flows: Vec<f64> = data.flow().iter().map(|f| f[t]).collect();
    let b = data.supply()[model.supply_index][t];
    let spec = data.transform();
    let mut baseline = Vec::new();
    let mut shocked = Vec::new();
    for (j, (f0, f1)) in model.fits.iter().zip(&shocked_model.fits).enumerate() {
        let s = stats::derive_seed(seed, j as u64);
        baseline.push(marginal_expected_price(f0, f0.evaluator().eta(b, &flows), spec, n_draws, s));
        shocked.push(marginal_expected_price(f1, f1.evaluator().eta(b, &flows), spec, n_draws, s));
    }
    let delta = shocked.iter().zip(&baseline).map(|(a, b)| a - b).collect();
    Ok(SupplyShockReport {
        supply_region: model.supply_region.clone(),
        t,
        mwh,
        regions: data.network().regions().to_vec(),
        baseline,
        shocked,
        delta,
    })
}

/// A dollar price impulse in one region over a window of observed periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceShock {
    pub region: usize,
    pub dollars: f64,
    /// Shocked periods; forecasting starts right after the window.
    pub window: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
pub struct ImpulseResponse {
    pub origin: usize,
    pub horizon: usize,
    pub baseline: Draws,
    pub shocked: Draws,
    pub transform: TransformSpec,
}

impl ImpulseResponse {
    /// Change in the predictive mean of the log price.
    pub fn delta_log_mean(&self, h: usize, j: usize) -> f64 {
        (0..self.shocked.n_draws)
            .map(|d| self.shocked.get(d, h, j) - self.baseline.get(d, h, j))
            .sum::<f64>()
            / self.shocked.n_draws as f64
    }

    /// Change in the expected dollar price.
    pub fn delta_price_mean(&self, h: usize, j: usize) -> f64 {
        expected_price(&self.shocked.column(h, j), &self.transform).0
            - expected_price(&self.baseline.column(h, j), &self.transform).0
    }

    /// Monte Carlo standard error of [`Self::delta_price_mean`] from the
    /// paired differences.
    pub fn delta_price_se(&self, h: usize, j: usize) -> f64 {
        let cap = self.transform.log_cap();
        let diffs: Vec<f64> = (0..self.shocked.n_draws)
            .map(|d| self.shocked.get(d, h, j).min(cap).exp() - self.baseline.get(d, h, j).min(cap).exp())
            .collect();
        (stats::variance(&diffs) / diffs.len() as f64).sqrt()
    }

    pub fn delta_quantile(&self, h: usize, j: usize, p: f64) -> f64 {
        stats::quantile(&self.shocked.column(h, j), p) - stats::quantile(&self.baseline.column(h, j), p)
    }
}

/// Generalized impulse response: two simulations with identical random
/// streams, one conditioning on the observed disturbances and one on the
/// disturbances with the impulse added in `shock.window`.
pub fn impulse_response(
    model: &SupplyModel,
    data: &PanelDataset,
    shock: &PriceShock,
    inputs: &HorizonInputs,
    horizon: usize,
    n_draws: usize,
    seed: u64,
) -> Result<ImpulseResponse> {
    let p = model.copula.order();
    let origin = shock.window.end;
    if shock.window.is_empty() || origin > data.len() || origin < p {
        return Err(Error::Validation(format!(
            "shock window {:?} must be non-empty, end within the data and leave {p} periods of history",
            shock.window
        )));
    }
    if shock.region >= model.fits.len() {
        return Err(Error::UnknownRegion(format!("#{}", shock.region)));
    }
    if inputs.horizon() < horizon {
        return Err(Error::Validation("horizon inputs shorter than the horizon".into()));
    }
    let spec = *data.transform();
    let start = origin - p;
    let eps = model.residuals(data, start..origin);
    let mut shocked_eps = eps.clone();
    for t in shock.window.clone().filter(|&t| t >= start) {
        let price = data.price()[shock.region][t];
        let base = price + spec.floor_offset;
        let bar = (base + shock.dollars).ln() - base.ln();
        if !bar.is_finite() {
            return Err(Error::Domain {
                what: "shocked price",
                value: price + shock.dollars,
            });
        }
        shocked_eps[shock.region][t - start] += bar;
    }
    let run = |eps: &[Vec<f64>]| -> Result<Draws> {
        let w = latent_history(&model.transforms, eps)?;
        let mut d = simulate_forward(&model.copula, &model.transforms, &w, horizon, n_draws, seed)?;
        let r = d.r;
        let evals: Vec<_> = model.fits.iter().map(|f| f.evaluator()).collect();
        for h in 0..horizon {
            let flows: Vec<f64> = inputs.flows.iter().map(|f| f[h]).collect();
            let b = inputs.supply[model.supply_index][h];
            for (j, e) in evals.iter().enumerate() {
                let eta = e.eta(b, &flows);
                for k in 0..n_draws {
                    d.data[(k * horizon + h) * r + j] += eta;
                }
            }
        }
        Ok(d)
    };
    Ok(ImpulseResponse {
        origin,
        horizon,
        baseline: run(&eps)?,
        shocked: run(&shocked_eps)?,
        transform: spec,
    })
}

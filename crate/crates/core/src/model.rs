//! The fitted system: one regression per (supply region, price region) pair
//! and one copula per supply region.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{compute_copula_data, fit_var, latent_history, select_and_fit, CopulaModel, MarginalTransform};
use crate::error::{Error, Result};
use crate::market::{PanelDataset, TransformSpec};
use crate::mcmc::{fit_regression, RegressionFit, SamplerConfig};

/// How the copula's lags are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagSpec {
    /// BIC over the short/daily candidates.
    Select,
    Fixed(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub sampler: SamplerConfig,
    pub lags: LagSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            sampler: SamplerConfig::default(),
            lags: LagSpec::Select,
        }
    }
}

/// Regressions and copula for one supply region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyModel {
    pub supply_region: String,
    pub supply_index: usize,
    /// Indexed by price region.
    pub fits: Vec<RegressionFit>,
    pub transforms: Vec<MarginalTransform>,
    pub copula: CopulaModel,
}

impl SupplyModel {
    /// Disturbances `pi - eta` (`[price region][t]`) over `range`.
    pub fn residuals(&self, data: &PanelDataset, range: std::ops::Range<usize>) -> Vec<Vec<f64>> {
        self.fits.iter().map(|f| f.residuals(data, range.clone())).collect()
    }

    /// Latent history for simulation from `origin` (last `p` periods).
    pub fn latent_history(&self, data: &PanelDataset, origin: usize) -> Result<Vec<Vec<f64>>> {
        let p = self.copula.order();
        if origin < p || origin > data.len() {
            return Err(Error::InsufficientData { needed: p, got: origin.min(data.len()) });
        }
        latent_history(&self.transforms, &self.residuals(data, origin - p..origin))
    }

    /// Mixture means `E(eps_j)`, one per price region.
    pub fn disturbance_means(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.mixture.mean()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub regions: Vec<String>,
    pub transform: TransformSpec,
    pub periods_per_day: usize,
    pub training_len: usize,
    pub models: Vec<SupplyModel>,
}

impl ModelSet {
    pub fn r(&self) -> usize {
        self.regions.len()
    }

    pub fn check_compatible(&self, data: &PanelDataset) -> Result<()> {
        if data.network().regions() != self.regions.as_slice() {
            return Err(Error::Validation("dataset regions differ from the fitted models".into()));
        }
        if data.transform() != &self.transform {
            return Err(Error::Validation("dataset price transform differs from the fitted models".into()));
        }
        Ok(())
    }
}

/// All `r^2` regressions, fitted in parallel; `[supply][price]`.
pub fn fit_all_regressions(data: &PanelDataset, cfg: &SamplerConfig) -> Result<Vec<Vec<RegressionFit>>> {
    cfg.validate()?;
    let r = data.network().n_regions();
    let fits: Vec<RegressionFit> = (0..r * r)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / r, k % r);
            log::info!("fitting regression supply={} price={}", data.network().regions()[i], data.network().regions()[j]);
            fit_regression(data, i, j, cfg, false)
        })
        .collect::<Result<_>>()?;
    let mut it = fits.into_iter();
    Ok((0..r).map(|_| it.by_ref().take(r).collect()).collect())
}

/// Copula for supply region `i` from its fitted regressions.
pub fn fit_supply_copula(data: &PanelDataset, fits: Vec<RegressionFit>, lags: &LagSpec) -> Result<SupplyModel> {
    let first = fits.first().ok_or_else(|| Error::MissingModel("no regressions".into()))?;
    let (supply_region, supply_index) = (first.supply_region.clone(), first.supply_index);
    let residuals: Vec<Vec<f64>> = fits.iter().map(|f| f.residuals(data, 0..data.len())).collect();
    let mixtures: Vec<_> = fits.iter().map(|f| f.mixture).collect();
    let (transforms, cd) = compute_copula_data(residuals, &mixtures)?;
    let copula = match lags {
        LagSpec::Select => select_and_fit(&cd.w, data.periods_per_day())?,
        LagSpec::Fixed(l) => fit_var(&cd.w, l)?,
    };
    Ok(SupplyModel {
        supply_region,
        supply_index,
        fits,
        transforms,
        copula,
    })
}

pub fn fit_copulas(data: &PanelDataset, regressions: Vec<Vec<RegressionFit>>, lags: &LagSpec) -> Result<ModelSet> {
    let models = regressions
        .into_par_iter()
        .map(|fits| fit_supply_copula(data, fits, lags))
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelSet {
        regions: data.network().regions().to_vec(),
        transform: *data.transform(),
        periods_per_day: data.periods_per_day(),
        training_len: data.len(),
        models,
    })
}

pub fn fit_models(data: &PanelDataset, cfg: &ModelConfig) -> Result<ModelSet> {
    let regressions = fit_all_regressions(data, &cfg.sampler)?;
    fit_copulas(data, regressions, &cfg.lags)
}

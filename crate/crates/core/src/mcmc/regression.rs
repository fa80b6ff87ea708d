use serde::{Deserialize, Serialize};

use super::mixture::MixtureParams;
use super::sampler::{Block, Problem, Sampler, SamplerConfig};
use crate::error::{Error, Result};
use crate::market::{Bounds, PanelDataset};
use crate::spline::{MonotoneFunction, SplineEval};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcCost {
    pub arc: String,
    pub arc_index: usize,
    pub function: MonotoneFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub burn_in: usize,
    pub sweeps: usize,
    pub seed: u64,
    pub observations: usize,
    /// Posterior inclusion frequency per coefficient, supply block first.
    pub inclusion: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Posterior-mean estimates for the regression of region `j`'s log price on
/// region `i`'s supply and the flows from `i` to `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub supply_region: String,
    pub supply_index: usize,
    pub price_region: String,
    pub price_index: usize,
    pub supply: MonotoneFunction,
    pub costs: Vec<ArcCost>,
    pub mixture: MixtureParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_probs: Option<Vec<[f64; 3]>>,
    pub diagnostics: FitDiagnostics,
}

/// Precomputed evaluator for the regression mean `eta`.
#[derive(Debug, Clone)]
pub struct EtaEval {
    supply: SplineEval,
    costs: Vec<(usize, SplineEval)>,
}

impl EtaEval {
    /// `S(b) + sum_a c_a(v_a)`, with raw supply and the full flow vector.
    pub fn eta(&self, supply: f64, flows: &[f64]) -> f64 {
        let mut v = self.supply.eval_raw(supply);
        for (a, c) in &self.costs {
            v += c.eval_raw(flows[*a]);
        }
        v
    }
}

impl RegressionFit {
    pub fn evaluator(&self) -> EtaEval {
        EtaEval {
            supply: self.supply.evaluator(),
            costs: self.costs.iter().map(|c| (c.arc_index, c.function.evaluator())).collect(),
        }
    }

    /// Same fit with the supply curve shifted by `mwh`.
    pub fn with_supply_shift(&self, mwh: f64) -> Self {
        let mut out = self.clone();
        out.supply = self.supply.shifted(mwh);
        out
    }

    /// Regression means over a range of the dataset.
    pub fn eta_series(&self, data: &PanelDataset, range: std::ops::Range<usize>) -> Vec<f64> {
        let ev = self.evaluator();
        let mut flows = vec![0.0; data.network().n_arcs()];
        range
            .map(|t| {
                for (a, f) in flows.iter_mut().enumerate() {
                    *f = data.flow()[a][t];
                }
                ev.eta(data.supply()[self.supply_index][t], &flows)
            })
            .collect()
    }

    /// `pi - eta` over a range of the dataset.
    pub fn residuals(&self, data: &PanelDataset, range: std::ops::Range<usize>) -> Vec<f64> {
        let eta = self.eta_series(data, range.clone());
        range
            .zip(eta)
            .map(|(t, e)| data.log_price()[self.price_index][t] - e)
            .collect()
    }
}

/// Sampler input for regression `(i, j)` over the whole dataset.
pub fn regression_problem(data: &PanelDataset, i: usize, j: usize, knots: usize) -> Result<Problem> {
    let net = data.network();
    if i >= net.n_regions() || j >= net.n_regions() {
        return Err(Error::UnknownRegion(format!("#{}", i.max(j))));
    }
    let supply = &data.supply()[i];
    let mut blocks = vec![Block::new(net.regions()[i].clone(), supply, Bounds::of(supply, false)?, knots)];
    for a in net.arcs_between(i, j) {
        let flow = &data.flow()[a];
        let bounds = match Bounds::of(flow, true) {
            Ok(b) => b,
            // a flow that never ran in training: fall back to the rated range
            Err(_) => Bounds::new(0.0, net.arcs()[a].max_capacity)?,
        };
        blocks.push(Block::new(net.arcs()[a].id.clone(), flow, bounds, knots));
    }
    Ok(Problem {
        y: data.log_price()[j].clone(),
        blocks,
    })
}

/// Fits regression `(i, j)`. Each pair draws from its own random stream so
/// fits can run in any order or in parallel.
pub fn fit_regression(
    data: &PanelDataset,
    i: usize,
    j: usize,
    cfg: &SamplerConfig,
    keep_label_probs: bool,
) -> Result<RegressionFit> {
    let net = data.network();
    let problem = regression_problem(data, i, j, cfg.knots)?;
    let stream = (i * net.n_regions() + j) as u64;
    let rng = stats::stream_rng(cfg.seed, stream);
    let post = Sampler::new(&problem, cfg.clone(), rng)?.run()?;
    let arcs = net.arcs_between(i, j);
    let mut functions = post.functions.into_iter();
    let supply = functions.next().expect("supply block");
    let costs = arcs
        .iter()
        .zip(functions)
        .map(|(&a, f)| ArcCost {
            arc: net.arcs()[a].id.clone(),
            arc_index: a,
            function: f,
        })
        .collect();
    Ok(RegressionFit {
        supply_region: net.regions()[i].clone(),
        supply_index: i,
        price_region: net.regions()[j].clone(),
        price_index: j,
        supply,
        costs,
        mixture: post.mixture,
        label_probs: keep_label_probs.then_some(post.label_probs),
        diagnostics: FitDiagnostics {
            burn_in: cfg.burn_in,
            sweeps: cfg.sweeps,
            seed: cfg.seed,
            observations: problem.len(),
            inclusion: post.inclusion,
            warnings: post.warnings,
        },
    })
}

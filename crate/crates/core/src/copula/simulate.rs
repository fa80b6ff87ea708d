use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::marginal::MarginalTransform;
use super::var::CopulaModel;
use crate::error::{Error, Result};
use crate::stats;

/// Simulated values stored draw-major: `(draw, h, region)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    pub n_draws: usize,
    pub horizon: usize,
    pub r: usize,
    pub data: Vec<f64>,
}

impl Draws {
    pub fn get(&self, d: usize, h: usize, j: usize) -> f64 {
        self.data[(d * self.horizon + h) * self.r + j]
    }

    /// All draws of region `j` at step `h` (0-based).
    pub fn column(&self, h: usize, j: usize) -> Vec<f64> {
        (0..self.n_draws).map(|d| self.get(d, h, j)).collect()
    }

    pub fn mean(&self, h: usize, j: usize) -> f64 {
        (0..self.n_draws).map(|d| self.get(d, h, j)).sum::<f64>() / self.n_draws as f64
    }
}

/// Latent normal scores of a disturbance history (`[region][t]`).
pub fn latent_history(transforms: &[MarginalTransform], eps: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if transforms.len() != eps.len() {
        return Err(Error::Validation("one transform per region is required".into()));
    }
    transforms
        .iter()
        .zip(eps)
        .map(|(tr, e)| {
            e.iter()
                .map(|&x| {
                    if !x.is_finite() {
                        return Err(Error::Validation(format!("non-finite history value {x}")));
                    }
                    Ok(stats::norm_ppf(tr.forward(x)))
                })
                .collect()
        })
        .collect()
}

/// Forward simulation of disturbances `eps_{T+1..T+H}` given the latent
/// history `w` (`[region][t]`, at least `p` columns). Draw `d` uses its own
/// random stream, so results do not depend on the thread count.
pub fn simulate_forward(
    model: &CopulaModel,
    transforms: &[MarginalTransform],
    history: &[Vec<f64>],
    horizon: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Draws> {
    let w = simulate_latent(model, history, horizon, n_draws, seed)?;
    if transforms.len() != model.r {
        return Err(Error::Validation("one transform per region is required".into()));
    }
    let mut data = w.data;
    data.par_chunks_mut(model.r).for_each(|row| {
        for (j, v) in row.iter_mut().enumerate() {
            let u = stats::norm_cdf(*v / model.marginal_sd[j]);
            *v = transforms[j].inverse(u);
        }
    });
    Ok(Draws { data, ..w })
}

/// Latent VAR paths only.
pub fn simulate_latent(
    model: &CopulaModel,
    history: &[Vec<f64>],
    horizon: usize,
    n_draws: usize,
    seed: u64,
) -> Result<Draws> {
    let r = model.r;
    let p = model.order();
    if history.len() != r {
        return Err(Error::Validation(format!("history has {} regions, model {r}", history.len())));
    }
    let t = history[0].len();
    if t < p || history.iter().any(|h| h.len() != t) {
        return Err(Error::InsufficientData { needed: p, got: t });
    }
    if history.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Validation("history contains non-finite values".into()));
    }
    let coefs: Vec<DMatrix<f64>> = (0..model.lags.len()).map(|k| model.coef(k)).collect();
    let chol = model.innovation_factor();
    // oldest first
    let start: Vec<DVector<f64>> = (t - p..t).map(|s| DVector::from_fn(r, |j, _| history[j][s])).collect();
    let mut data = vec![0.0; n_draws * horizon * r];
    data.par_chunks_mut((horizon * r).max(1))
        .enumerate()
        .for_each(|(d, out)| {
            let mut rng = stats::stream_rng(seed, d as u64);
            let mut path = start.clone();
            path.reserve(horizon);
            for h in 0..horizon {
                let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
                let mut next = &chol * z;
                let len = path.len();
                for (a, &lag) in coefs.iter().zip(&model.lags) {
                    next += a * &path[len - lag];
                }
                out[h * r..(h + 1) * r].copy_from_slice(next.as_slice());
                path.push(next);
            }
        });
    Ok(Draws {
        n_draws,
        horizon,
        r,
        data,
    })
}

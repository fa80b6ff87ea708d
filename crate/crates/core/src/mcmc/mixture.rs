use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Three-component normal mixture on the log-price scale. Component 1 is
/// the baseline (smallest variance), component 2 sits below it and
/// component 3 above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: [f64; 3],
    pub means: [f64; 3],
    pub sds: [f64; 3],
}

impl MixtureParams {
    pub fn validate(&self) -> Result<()> {
        let wsum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("mixture weights {:?} do not form a distribution", self.weights)));
        }
        if !(self.means[1] < self.means[0] && self.means[0] < self.means[2]) {
            return Err(Error::Validation(format!("mixture means {:?} violate ordering", self.means)));
        }
        if !(self.sds[0] > 0.0 && self.sds[0] < self.sds[1] && self.sds[0] < self.sds[2]) {
            return Err(Error::Validation(format!("mixture sds {:?} violate ordering", self.sds)));
        }
        Ok(())
    }

    /// A degenerate one-component "mixture".
    pub fn single(mean: f64, sd: f64) -> Self {
        MixtureParams {
            weights: [1.0, 0.0, 0.0],
            means: [mean, mean, mean],
            sds: [sd, sd, sd],
        }
    }

    pub fn variances(&self) -> [f64; 3] {
        self.sds.map(|s| s * s)
    }

    /// `E(eps) = sum_l w_l alpha_l`.
    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, a)| w * a).sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        stats::mixture_cdf(&self.weights, &self.means, &self.sds, x)
    }

    pub fn sf(&self, x: f64) -> f64 {
        stats::mixture_sf(&self.weights, &self.means, &self.sds, x)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        stats::mixture_pdf(&self.weights, &self.means, &self.sds, x)
    }

    pub fn ppf(&self, p: f64) -> f64 {
        stats::mixture_ppf(&self.weights, &self.means, &self.sds, p)
    }

    /// Posterior probability of each component for a disturbance `x`.
    pub fn responsibilities(&self, x: f64) -> [f64; 3] {
        let mut r = [0.0; 3];
        for l in 0..3 {
            if self.weights[l] > 0.0 {
                r[l] = self.weights[l] * stats::norm_pdf((x - self.means[l]) / self.sds[l]) / self.sds[l];
            }
        }
        let total: f64 = r.iter().sum();
        if total > 0.0 && total.is_finite() {
            r.map(|v| v / total)
        } else {
            // far tail: the widest component dominates
            let widest = (0..3)
                .filter(|&l| self.weights[l] > 0.0)
                .max_by(|&a, &b| self.sds[a].partial_cmp(&self.sds[b]).unwrap())
                .unwrap_or(0);
            let mut r = [0.0; 3];
            r[widest] = 1.0;
            r
        }
    }
}

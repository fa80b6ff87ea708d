use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::MixtureParams;
use crate::stats;

/// Composite marginal CDF of a regression disturbance: the empirical CDF of
/// the training residuals (rank/(T+1)), interpolated linearly between order
/// statistics, with the fitted mixture supplying the shape of both tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTransform {
    pub mixture: MixtureParams,
    sorted: Vec<f64>,
    /// Mixture quantiles at 1/(T+1) and T/(T+1); the tails beyond the
    /// extreme residuals are the mixture tails translated to start there.
    lo_anchor: f64,
    hi_anchor: f64,
}

impl MarginalTransform {
    pub fn new(mixture: MixtureParams, residuals: &[f64]) -> Result<Self> {
        if residuals.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: residuals.len(),
            });
        }
        if let Some(x) = residuals.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite residual {x}")));
        }
        let mut sorted = residuals.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n1 = (sorted.len() + 1) as f64;
        Ok(MarginalTransform {
            lo_anchor: mixture.ppf(1.0 / n1),
            hi_anchor: mixture.ppf(1.0 - 1.0 / n1),
            mixture,
            sorted,
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_residuals(&self) -> &[f64] {
        &self.sorted
    }

    /// Mixture CDF `F_dagger`.
    pub fn mixture_cdf(&self, x: f64) -> f64 {
        self.mixture.cdf(x)
    }

    /// EDF value `#{e_s <= x} / (T+1)`.
    pub fn edf(&self, x: f64) -> f64 {
        let k = self.sorted.partition_point(|&v| v <= x);
        k as f64 / (self.sorted.len() + 1) as f64
    }

    /// Continuous composite CDF. Agrees with [`Self::edf`] at every training
    /// residual and stays strictly inside (0,1).
    pub fn forward(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        let n1 = (n + 1) as f64;
        let first = self.sorted[0];
        let last = self.sorted[n - 1];
        if x < first {
            return self.mixture.cdf(self.lo_anchor + (x - first)).max(f64::MIN_POSITIVE);
        }
        if x > last {
            let q = self.mixture.sf(self.hi_anchor + (x - last));
            return (1.0 - q).min(1.0 - f64::EPSILON / 2.0);
        }
        // k = number of residuals <= x, at least 1 here
        let k = self.sorted.partition_point(|&v| v <= x);
        if k == n || self.sorted[k - 1] == x {
            return k as f64 / n1;
        }
        let (a, b) = (self.sorted[k - 1], self.sorted[k]);
        // interpolate from (a, k/(T+1)) to (b, (k + ties at b)/(T+1))
        let kb = self.sorted.partition_point(|&v| v <= b);
        let frac = (x - a) / (b - a);
        (k as f64 + frac * (kb - k) as f64) / n1
    }

    /// Inverse of [`Self::forward`].
    pub fn inverse(&self, u: f64) -> f64 {
        let n = self.sorted.len();
        let n1 = (n + 1) as f64;
        let first = self.sorted[0];
        let last = self.sorted[n - 1];
        if !(u > 0.0) {
            return f64::NEG_INFINITY;
        }
        if !(u < 1.0) {
            return f64::INFINITY;
        }
        if u < 1.0 / n1 {
            return first + (self.mixture.ppf(u) - self.lo_anchor).min(0.0);
        }
        if u > n as f64 / n1 {
            return last + (self.mixture_isf(1.0 - u) - self.hi_anchor).max(0.0);
        }
        // position on the piecewise-linear EDF: k/(T+1) at sorted[k-1]
        let pos = u * n1;
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        if k >= n {
            return last;
        }
        let a = self.sorted[k - 1];
        if frac == 0.0 {
            return a;
        }
        let b = self.sorted[k];
        a + frac * (b - a)
    }

    fn mixture_isf(&self, q: f64) -> f64 {
        if q >= 0.5 {
            return self.mixture.ppf(1.0 - q);
        }
        let m = &self.mixture;
        let mut lo = self.hi_anchor;
        let mut step = m.sds.iter().cloned().fold(1e-12, f64::max);
        while m.sf(lo) < q {
            lo -= step;
            step *= 2.0;
        }
        let mut hi = lo + step;
        while m.sf(hi) > q {
            hi += step;
            step *= 2.0;
        }
        stats::bisect(|x| q - m.sf(x), lo, hi)
    }
}

/// Copula data for one supply region: residuals, mixture PITs, EDF PITs and
/// their normal scores, each stored as `[region][t]`.
#[derive(Debug, Clone)]
pub struct CopulaData {
    pub residuals: Vec<Vec<f64>>,
    pub u_tilde: Vec<Vec<f64>>,
    pub u_hat: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

/// Builds transforms and copula data from per-region residuals and fitted
/// mixtures.
pub fn compute_copula_data(
    residuals: Vec<Vec<f64>>,
    mixtures: &[MixtureParams],
) -> Result<(Vec<MarginalTransform>, CopulaData)> {
    if residuals.len() != mixtures.len() {
        return Err(Error::Validation("one mixture per region is required".into()));
    }
    let mut transforms = Vec::with_capacity(residuals.len());
    let mut u_tilde = Vec::with_capacity(residuals.len());
    let mut u_hat = Vec::with_capacity(residuals.len());
    let mut w = Vec::with_capacity(residuals.len());
    for (eps, mix) in residuals.iter().zip(mixtures) {
        let tr = MarginalTransform::new(*mix, eps)?;
        u_tilde.push(eps.iter().map(|&e| mix.cdf(e)).collect());
        let uh: Vec<f64> = eps.iter().map(|&e| tr.edf(e)).collect();
        let wh: Vec<f64> = uh.iter().map(|&u| stats::norm_ppf(u)).collect();
        if let Some(x) = wh.iter().find(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite normal score {x}")));
        }
        u_hat.push(uh);
        w.push(wh);
        transforms.push(tr);
    }
    Ok((
        transforms,
        CopulaData {
            residuals,
            u_tilde,
            u_hat,
            w,
        },
    ))
}

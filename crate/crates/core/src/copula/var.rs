use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Radius the coefficients are shrunk to when a fit is not stationary.
pub const TARGET_RADIUS: f64 = 0.995;

pub const MAX_SHORT_LAGS: usize = 5;
pub const MAX_DAILY_LAGS: usize = 7;

/// Contiguous short lags `1..=short` plus `daily` same-time-of-day lags at
/// multiples of `period`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSet {
    pub short: usize,
    pub daily: usize,
    pub period: usize,
}

impl LagSet {
    pub fn lags(&self) -> Vec<usize> {
        let mut l: Vec<usize> = (1..=self.short).collect();
        l.extend((1..=self.daily).map(|d| d * self.period));
        l.sort_unstable();
        l.dedup();
        l
    }
}

/// Zero-mean Gaussian VAR with sparse lags, the latent process of the
/// copula. Matrices are stored row-major, `r * r` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaModel {
    pub r: usize,
    pub lags: Vec<usize>,
    pub coefs: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Stationary standard deviation of each latent series; simulated paths
    /// are divided by it before the normal CDF.
    pub marginal_sd: Vec<f64>,
    /// Factor applied to the estimated coefficients (1 unless the fit had
    /// to be pulled back inside the stationary region).
    pub shrink: f64,
    #[serde(default)]
    pub lag_choice: Option<LagSet>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CopulaModel {
    /// Builds a model from dense coefficient blocks and fills in the
    /// stationary moments.
    pub fn new(lags: Vec<usize>, coefs: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let r = sigma.nrows();
        if sigma.ncols() != r || coefs.len() != lags.len() || coefs.iter().any(|a| a.shape() != (r, r)) {
            return Err(Error::Validation("coefficient/innovation shapes disagree".into()));
        }
        if lags.contains(&0) || lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!("lags {lags:?} must be positive and increasing")));
        }
        let mut m = CopulaModel {
            r,
            lags,
            coefs: coefs.iter().map(row_major).collect(),
            sigma: row_major(&sigma),
            marginal_sd: vec![1.0; r],
            shrink: 1.0,
            lag_choice: None,
            warnings: Vec::new(),
        };
        m.refresh_moments()?;
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.lags.last().copied().unwrap_or(0)
    }

    pub fn coef(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.r, self.r, &self.coefs[k])
    }

    pub fn coef_at(&self, lag: usize) -> Option<DMatrix<f64>> {
        self.lags.iter().position(|&l| l == lag).map(|k| self.coef(k))
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.r, self.r, &self.sigma)
    }

    /// A factor `L` with `L L' = Sigma_w`; Cholesky when positive definite,
    /// symmetric square root otherwise (degenerate innovations).
    pub fn innovation_factor(&self) -> DMatrix<f64> {
        let s = self.sigma_matrix();
        if let Some(c) = s.clone().cholesky() {
            return c.l();
        }
        let eig = s.symmetric_eigen();
        let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        &eig.eigenvectors * root
    }

    /// One-step conditional mean `sum_h A_h w_{t+1-h}` given past latent
    /// vectors, `past[k]` being `w_{t-k}`.
    pub fn conditional_mean(&self, past: &[DVector<f64>]) -> DVector<f64> {
        let mut m = DVector::zeros(self.r);
        for (k, &h) in self.lags.iter().enumerate() {
            m += self.coef(k) * &past[h - 1];
        }
        m
    }

    pub fn spectral_radius(&self) -> f64 {
        let coefs: Vec<DMatrix<f64>> = (0..self.lags.len()).map(|k| self.coef(k)).collect();
        spectral_radius(&self.lags, &coefs)
    }

    pub(crate) fn refresh_moments(&mut self) -> Result<()> {
        let g0 = super::autocov::autocovariances(self, &[0])?.remove(0);
        self.marginal_sd = (0..self.r)
            .map(|j| {
                let v = g0[(j, j)];
                if v > 0.0 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(())
    }

    /// Conditional Gaussian log-likelihood of `w` (`[region][t]`) given its
    /// first `p` observations.
    pub fn loglik(&self, w: &[Vec<f64>]) -> Result<f64> {
        let p = self.order();
        let t = check_series(w, self.r)?;
        let chol = self
            .sigma_matrix()
            .cholesky()
            .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let coefs: Vec<DMatrix<f64>> = (0..self.lags.len()).map(|k| self.coef(k)).collect();
        let mut quad = 0.0;
        for s in p..t {
            let mut e = DVector::from_fn(self.r, |j, _| w[j][s]);
            for (a, &h) in coefs.iter().zip(&self.lags) {
                e -= a * DVector::from_fn(self.r, |j, _| w[j][s - h]);
            }
            quad += chol.solve(&e).dot(&e);
        }
        let n = (t - p) as f64;
        Ok(-0.5 * n * (self.r as f64 * (2.0 * std::f64::consts::PI).ln() + logdet) - 0.5 * quad)
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn check_series(w: &[Vec<f64>], r: usize) -> Result<usize> {
    if w.len() != r || r == 0 {
        return Err(Error::Validation(format!("expected {r} latent series, got {}", w.len())));
    }
    let t = w[0].len();
    if w.iter().any(|s| s.len() != t) {
        return Err(Error::Validation("latent series have unequal lengths".into()));
    }
    if w.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Validation("latent series contain non-finite values".into()));
    }
    Ok(t)
}

/// Cross-product matrix of `z_t = (w_t, w_{t-h1}, w_{t-h2}, ...)` over
/// `t in start..T`.
struct Gram {
    r: usize,
    lags: Vec<usize>,
    g: DMatrix<f64>,
    n: usize,
}

impl Gram {
    fn new(w: &[Vec<f64>], lags: &[usize], start: usize) -> Self {
        let r = w.len();
        let t = w[0].len();
        let dim = r * (1 + lags.len());
        let mut g = DMatrix::zeros(dim, dim);
        let mut z = vec![0.0; dim];
        for s in start..t {
            for j in 0..r {
                z[j] = w[j][s];
            }
            for (k, &h) in lags.iter().enumerate() {
                for j in 0..r {
                    z[r * (k + 1) + j] = w[j][s - h];
                }
            }
            for a in 0..dim {
                let za = z[a];
                for b in a..dim {
                    g[(a, b)] += za * z[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        Gram {
            r,
            lags: lags.to_vec(),
            g,
            n: t - start,
        }
    }

    /// Least-squares fit on a subset of the Gram's lags; returns the
    /// coefficient blocks and the MLE innovation covariance.
    fn solve(&self, lags: &[usize]) -> Result<(Vec<DMatrix<f64>>, DMatrix<f64>)> {
        let r = self.r;
        let mut idx = Vec::with_capacity(r * lags.len());
        for &h in lags {
            let k = self
                .lags
                .iter()
                .position(|&l| l == h)
                .ok_or_else(|| Error::Validation(format!("lag {h} not available")))?;
            idx.extend((0..r).map(|j| r * (k + 1) + j));
        }
        let m = idx.len();
        let xx = DMatrix::from_fn(m, m, |a, b| self.g[(idx[a], idx[b])]);
        let xy = DMatrix::from_fn(m, r, |a, j| self.g[(idx[a], j)]);
        let yy = DMatrix::from_fn(r, r, |a, b| self.g[(a, b)]);
        let chol = xx
            .cholesky()
            .ok_or_else(|| Error::Numerical("lagged regressors are collinear".into()))?;
        let b = chol.solve(&xy);
        let mut sigma = (yy - xy.transpose() * &b) / self.n as f64;
        sigma = (&sigma + sigma.transpose()) * 0.5;
        let coefs = (0..lags.len())
            .map(|k| b.rows(k * r, r).transpose())
            .collect();
        Ok((coefs, sigma))
    }
}

fn gaussian_max_loglik(sigma: &DMatrix<f64>, n: usize) -> Result<f64> {
    let r = sigma.nrows() as f64;
    let det = sigma.determinant();
    if !(det > 0.0) {
        return Err(Error::Numerical(format!("innovation covariance determinant {det}")));
    }
    Ok(-0.5 * n as f64 * (r * (2.0 * std::f64::consts::PI).ln() + det.ln() + r))
}

/// Conditional least-squares (Gaussian conditional MLE) fit of a VAR with
/// the given lags; non-stationary estimates are shrunk back to
/// [`TARGET_RADIUS`].
pub fn fit_var(w: &[Vec<f64>], lags: &[usize]) -> Result<CopulaModel> {
    let r = w.len();
    let t = check_series(w, r)?;
    let mut lags = lags.to_vec();
    lags.sort_unstable();
    lags.dedup();
    let p = *lags.last().ok_or_else(|| Error::Validation("empty lag set".into()))?;
    if lags[0] == 0 {
        return Err(Error::Validation("lag 0 is not allowed".into()));
    }
    let needed = p + r * lags.len() + 1;
    if t < needed {
        return Err(Error::InsufficientData { needed, got: t });
    }
    let gram = Gram::new(w, &lags, p);
    let (mut coefs, sigma) = gram.solve(&lags)?;
    let mut warnings = Vec::new();
    let radius = spectral_radius(&lags, &coefs);
    let mut shrink = 1.0;
    if radius >= 1.0 {
        shrink = stationary_shrink(&lags, &coefs);
        for a in coefs.iter_mut() {
            *a *= shrink;
        }
        let msg = format!("VAR spectral radius {radius:.4} >= 1; coefficients scaled by {shrink:.6}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut model = CopulaModel::new(lags, coefs, sigma)?;
    model.shrink = shrink;
    model.warnings = warnings;
    Ok(model)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagCandidate {
    pub lag_set: LagSet,
    pub loglik: f64,
    pub params: usize,
    pub bic: f64,
}

/// BIC comparison of the 5 x 7 short/daily lag combinations on a common
/// estimation sample. Candidates come back in (short, daily) order; the
/// chosen one is returned separately.
pub fn select_lags(w: &[Vec<f64>], period: usize) -> Result<(LagSet, Vec<LagCandidate>)> {
    let r = w.len();
    let t = check_series(w, r)?;
    let p_max = MAX_DAILY_LAGS * period;
    if t <= 2 * p_max {
        return Err(Error::InsufficientData {
            needed: 2 * p_max + 1,
            got: t,
        });
    }
    let all = LagSet {
        short: MAX_SHORT_LAGS,
        daily: MAX_DAILY_LAGS,
        period,
    }
    .lags();
    let gram = Gram::new(w, &all, p_max);
    let n = gram.n;
    let mut table = Vec::new();
    for short in 1..=MAX_SHORT_LAGS {
        for daily in 1..=MAX_DAILY_LAGS {
            let lag_set = LagSet { short, daily, period };
            let lags = lag_set.lags();
            let (_, sigma) = gram.solve(&lags)?;
            let loglik = gaussian_max_loglik(&sigma, n)?;
            let params = r * r * lags.len();
            let bic = -2.0 * loglik + params as f64 * (n as f64).ln();
            table.push(LagCandidate {
                lag_set,
                loglik,
                params,
                bic,
            });
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| a.bic.total_cmp(&b.bic))
        .expect("35 candidates")
        .lag_set;
    Ok((best, table))
}

/// Selects the lag structure by BIC and fits it.
pub fn select_and_fit(w: &[Vec<f64>], period: usize) -> Result<CopulaModel> {
    let (choice, _) = select_lags(w, period)?;
    let mut model = fit_var(w, &choice.lags())?;
    model.lag_choice = Some(choice);
    Ok(model)
}

/// Spectral radius of the companion matrix. Small systems use a dense
/// eigen-decomposition; large sparse-lag systems use the asymptotic growth
/// rate of the VAR recursion, which needs only the `|L|` nonzero blocks.
pub fn spectral_radius(lags: &[usize], coefs: &[DMatrix<f64>]) -> f64 {
    let r = coefs.first().map_or(0, |a| a.nrows());
    let p = lags.last().copied().unwrap_or(0);
    if r == 0 || p == 0 {
        return 0.0;
    }
    if r * p <= 240 {
        companion_radius_dense(lags, coefs)
    } else {
        companion_radius_growth(lags, coefs)
    }
}

pub(crate) fn companion(lags: &[usize], coefs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let r = coefs[0].nrows();
    let p = *lags.last().unwrap();
    let mut c = DMatrix::zeros(r * p, r * p);
    for (a, &h) in coefs.iter().zip(lags) {
        c.view_mut((0, (h - 1) * r), (r, r)).copy_from(a);
    }
    for k in 1..p {
        for j in 0..r {
            c[(k * r + j, (k - 1) * r + j)] = 1.0;
        }
    }
    c
}

pub(crate) fn companion_radius_dense(lags: &[usize], coefs: &[DMatrix<f64>]) -> f64 {
    companion(lags, coefs)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub(crate) fn companion_radius_growth(lags: &[usize], coefs: &[DMatrix<f64>]) -> f64 {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let r = coefs[0].nrows();
    let p = *lags.last().unwrap();
    let burn = (60 * p).max(3000);
    let measure = (60 * p).max(3000);
    let mut rng = stats::stream_rng(0x5eed, 0);
    // ring buffer of the last p states, newest at `head`
    let mut buf: Vec<DVector<f64>> = (0..p)
        .map(|_| DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut head = p - 1;
    let mut log_growth = 0.0;
    let renorm = 16;
    for step in 1..=(burn + measure) {
        let mut next = DVector::zeros(r);
        for (a, &h) in coefs.iter().zip(lags) {
            next += a * &buf[(head + p + 1 - h) % p];
        }
        head = (head + 1) % p;
        buf[head] = next;
        if step % renorm == 0 {
            let norm = buf.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            if step > burn {
                log_growth += norm.ln();
            }
            for v in buf.iter_mut() {
                *v /= norm;
            }
        }
    }
    (log_growth / (measure - measure % renorm) as f64).exp()
}

/// Largest `c` in (0,1] with `radius(c A) <= TARGET_RADIUS`.
fn stationary_shrink(lags: &[usize], coefs: &[DMatrix<f64>]) -> f64 {
    let radius = |c: f64| {
        let scaled: Vec<DMatrix<f64>> = coefs.iter().map(|a| a * c).collect();
        spectral_radius(lags, &scaled)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if radius(mid) <= TARGET_RADIUS {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn simulate(lags: &[usize], coefs: &[DMatrix<f64>], chol: &DMatrix<f64>, t: usize, seed: u64) -> Vec<Vec<f64>> {
        let r = chol.nrows();
        let p = *lags.last().unwrap();
        let burn = 20 * p + 500;
        let mut rng = stats::stream_rng(seed, 7);
        let mut path: Vec<DVector<f64>> = vec![DVector::zeros(r); p];
        for s in 0..burn + t {
            let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut next = chol * z;
            for (a, &h) in coefs.iter().zip(lags) {
                next += a * &path[path.len() - h];
            }
            path.push(next);
            if s < burn && path.len() > 2 * p {
                path.drain(..p);
            }
        }
        let tail = &path[path.len() - t..];
        (0..r).map(|j| tail.iter().map(|v| v[j]).collect()).collect()
    }

    #[test]
    fn ar1_estimate_matches_conditional_ls() {
        let a = DMatrix::from_element(1, 1, 0.6);
        let w = simulate(&[1], &[a], &DMatrix::identity(1, 1), 100_000, 3);
        let m = fit_var(&w, &[1]).unwrap();
        // independent oracle: sum x_t x_{t-1} / sum x_{t-1}^2
        let x = &w[0];
        let num: f64 = (1..x.len()).map(|t| x[t] * x[t - 1]).sum();
        let den: f64 = (1..x.len()).map(|t| x[t - 1] * x[t - 1]).sum();
        assert!((m.coefs[0][0] - num / den).abs() < 1e-10);
        assert!((m.coefs[0][0] - 0.6).abs() < 0.01);
    }

    #[test]
    fn white_noise_gives_small_coefficients() {
        let r = 2;
        let zero = vec![DMatrix::zeros(r, r)];
        let w = simulate(&[1], &zero, &DMatrix::identity(r, r), 20_000, 5);
        let m = fit_var(&w, &[1, 2]).unwrap();
        let se = 1.0 / (20_000f64).sqrt();
        for a in &m.coefs {
            for v in a {
                assert!(v.abs() < 3.5 * se, "{v}");
            }
        }
    }

    #[test]
    fn optimum_beats_truth() {
        let lags = [1, 3];
        let coefs = vec![
            DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]),
            DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.2]),
        ];
        let chol = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.4, 0.8]);
        let w = simulate(&lags, &coefs, &chol, 3000, 11);
        let fitted = fit_var(&w, &lags).unwrap();
        let truth = CopulaModel::new(lags.to_vec(), coefs, &chol * chol.transpose()).unwrap();
        assert!(fitted.loglik(&w).unwrap() >= truth.loglik(&w).unwrap());
    }

    #[test]
    fn bic_matches_definition() {
        let zero = vec![DMatrix::zeros(2, 2)];
        let w = simulate(&[1], &zero, &DMatrix::identity(2, 2), 2000, 9);
        let (best, table) = select_lags(&w, 24).unwrap();
        assert_eq!(table.len(), 35);
        let cand = &table[7];
        let p_max = 7 * 24;
        let n = (2000 - p_max) as f64;
        let expected = -2.0 * cand.loglik + cand.params as f64 * n.ln();
        assert!((cand.bic - expected).abs() < 1e-9);
        assert_eq!(best, LagSet { short: 1, daily: 1, period: 24 });
    }

    #[test]
    fn growth_radius_agrees_with_dense() {
        let mut rng = stats::stream_rng(2, 2);
        for case in 0..5 {
            let lags = vec![1, 2, 24];
            let coefs: Vec<DMatrix<f64>> = lags
                .iter()
                .map(|_| DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.4..0.4)))
                .collect();
            let dense = companion_radius_dense(&lags, &coefs);
            let growth = companion_radius_growth(&lags, &coefs);
            assert!((dense - growth).abs() < 2e-3, "case {case}: {dense} vs {growth}");
        }
    }

    #[test]
    fn explosive_fit_is_pulled_back() {
        let lags = [1];
        let coefs = vec![DMatrix::from_element(1, 1, 1.02)];
        let w = simulate(&lags, &coefs, &DMatrix::identity(1, 1), 400, 1);
        let m = fit_var(&w, &lags).unwrap();
        assert!(m.shrink < 1.0);
        assert!((m.spectral_radius() - TARGET_RADIUS).abs() < 1e-6);
        assert_eq!(m.warnings.len(), 1);
    }
}

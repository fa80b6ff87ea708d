//! Slice-within-Gibbs sampler. The slice variable `z` bounds the negative
//! log-likelihood `s`; every conditional draw is from the prior restricted
//! to the set where `s < z`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mixture::MixtureParams;
use crate::error::{Error, Result};
use crate::market::Bounds;
use crate::spline::{MonotoneFunction, SplineBasis, DEFAULT_KNOTS};
use crate::stats::{self, LN_2PI};

/// Sampler settings and prior hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub knots: usize,
    pub burn_in: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Prior probability that a spline coefficient is excluded.
    pub p_zero: f64,
    /// Prior scale of `gamma` relative to the baseline variance; `None`
    /// means the sample size.
    pub c_coef: Option<f64>,
    /// Prior variance of the component means.
    pub c_mean: f64,
    /// Upper end of the uniform prior on component variances.
    pub c_var: f64,
    /// Baseline variance must stay below this fraction of the other two.
    pub variance_separation: f64,
    /// Collapse the disturbance to one normal component.
    pub single_component: bool,
    /// Keep every spline coefficient in the model.
    pub force_include: bool,
    /// Swap the initial labels of components 2 and 3.
    pub swap_initial_labels: bool,
    /// Record per-sweep coefficient traces.
    pub keep_traces: bool,
    /// Redraw the slice variable before every conditional update rather
    /// than once per sweep. Both leave the posterior invariant; per-update
    /// refreshing lets labels move far more freely.
    pub refresh_slice: bool,
    /// Repeats of the cheap mean and variance updates per sweep when the
    /// slice is refreshed.
    pub inner_updates: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            knots: DEFAULT_KNOTS,
            burn_in: 2000,
            sweeps: 5000,
            seed: 1,
            p_zero: 0.8,
            c_coef: None,
            c_mean: 100.0 * 100.0,
            c_var: 100.0,
            variance_separation: 0.25,
            single_component: false,
            force_include: false,
            swap_initial_labels: false,
            keep_traces: false,
            refresh_slice: true,
            inner_updates: 10,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_zero >= 0.0 && self.p_zero < 1.0) {
            return Err(Error::Config(format!("p_zero must lie in [0,1), got {}", self.p_zero)));
        }
        if !(self.variance_separation > 0.0 && self.variance_separation <= 1.0) {
            return Err(Error::Config("variance_separation must lie in (0,1]".into()));
        }
        if self.sweeps == 0 {
            return Err(Error::Config("need at least one retained sweep".into()));
        }
        if !(self.c_mean > 0.0 && self.c_var > 0.0) {
            return Err(Error::Config("prior scales must be positive".into()));
        }
        Ok(())
    }
}

/// One monotone function in the regression: its covariate and basis.
#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub basis: SplineBasis,
    pub bounds: Bounds,
    /// Normalized covariate.
    pub b: Vec<f64>,
    cols: Vec<Vec<f64>>,
}

impl Block {
    pub fn new(name: impl Into<String>, raw: &[f64], bounds: Bounds, knots: usize) -> Self {
        let b: Vec<f64> = raw.iter().map(|&x| bounds.normalize(x)).collect();
        let basis = SplineBasis::from_quantiles(&b, knots);
        Self::with_basis(name, b, basis, bounds)
    }

    pub fn with_basis(name: impl Into<String>, b: Vec<f64>, basis: SplineBasis, bounds: Bounds) -> Self {
        let cols = (0..basis.dim())
            .map(|j| b.iter().map(|&x| basis.basis(j, x)).collect())
            .collect();
        Block {
            name: name.into(),
            basis,
            bounds,
            b,
            cols,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn eval_into(&self, beta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &bj) in beta.iter().enumerate() {
            if bj != 0.0 {
                for (o, x) in out.iter_mut().zip(&self.cols[j]) {
                    *o += bj * x;
                }
            }
        }
    }
}

/// Response plus the monotone blocks (supply first, then arc costs).
#[derive(Debug, Clone)]
pub struct Problem {
    pub y: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl Problem {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BlockState {
    pub include: Vec<bool>,
    /// Constrained coefficients at full length (zero where excluded).
    pub gamma: Vec<f64>,
    /// Unconstrained coefficients at full length.
    pub beta: Vec<f64>,
    pub fitted: Vec<f64>,
}

fn compact(include: &[bool], full: &[f64]) -> Vec<f64> {
    include.iter().zip(full).filter(|(&i, _)| i).map(|(_, &v)| v).collect()
}

fn expand(include: &[bool], compact: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; include.len()];
    let mut q = 0;
    for (j, &inc) in include.iter().enumerate() {
        if inc {
            out[j] = compact[q];
            q += 1;
        }
    }
    out
}

fn beta_of(basis: &SplineBasis, include: &[bool], gamma_full: &[f64]) -> Vec<f64> {
    let g = compact(include, gamma_full);
    if g.is_empty() {
        return vec![0.0; include.len()];
    }
    expand(include, &basis.solve_lj(include, &g))
}

/// Open set `{x : a x^2 - 2 b x + c < 0}` when it is an interval.
pub fn quad_interval(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(1e-300);
    if a > 1e-14 * scale {
        let disc = b * b - a * c;
        if !(disc > 0.0) {
            return None;
        }
        let root = disc.sqrt();
        let q = b + b.signum() * root;
        if q == 0.0 {
            return None;
        }
        let (r1, r2) = (q / a, c / q);
        Some((r1.min(r2), r1.max(r2)))
    } else if b > 0.0 {
        Some((c / (2.0 * b), f64::INFINITY))
    } else if b < 0.0 {
        Some((f64::NEG_INFINITY, c / (2.0 * b)))
    } else if c < 0.0 {
        Some((f64::NEG_INFINITY, f64::INFINITY))
    } else {
        None
    }
}

/// Live sampler state for one regression.
pub struct Sampler<'a> {
    problem: &'a Problem,
    cfg: SamplerConfig,
    rng: ChaCha8Rng,
    c_coef: f64,
    pub labels: Vec<u8>,
    pub z: f64,
    pub omega: [f64; 3],
    pub alpha: [f64; 3],
    pub var: [f64; 3],
    pub blocks: Vec<BlockState>,
    /// `y - sum of fitted blocks`.
    resid: Vec<f64>,
    n: [usize; 3],
    sum: [f64; 3],
}

impl<'a> Sampler<'a> {
    /// Step 0: initial values from a least-squares line on the first block
    /// and percentile-based mixture parameters.
    pub fn new(problem: &'a Problem, cfg: SamplerConfig, rng: ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let t_len = problem.len();
        if t_len < 10 {
            return Err(Error::InsufficientData { needed: 10, got: t_len });
        }
        if problem.blocks.is_empty() {
            return Err(Error::Config("regression needs at least one monotone block".into()));
        }
        let c_coef = cfg.c_coef.unwrap_or(t_len as f64);
        let mut blocks = Vec::with_capacity(problem.blocks.len());
        for (k, blk) in problem.blocks.iter().enumerate() {
            let dim = blk.dim();
            let mut include = vec![cfg.force_include; dim];
            let mut gamma = vec![0.0; dim];
            if k == 0 {
                include[0] = true;
                let bm = stats::mean(&blk.b);
                let ym = stats::mean(&problem.y);
                let (mut sxy, mut sxx) = (0.0, 0.0);
                for (x, y) in blk.b.iter().zip(&problem.y) {
                    sxy += (x - bm) * (y - ym);
                    sxx += (x - bm) * (x - bm);
                }
                gamma[0] = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
            }
            let beta = beta_of(&blk.basis, &include, &gamma);
            let mut fitted = vec![0.0; t_len];
            blk.eval_into(&beta, &mut fitted);
            blocks.push(BlockState {
                include,
                gamma,
                beta,
                fitted,
            });
        }
        let mut resid = problem.y.clone();
        for bs in &blocks {
            for (r, f) in resid.iter_mut().zip(&bs.fitted) {
                *r -= f;
            }
        }
        let mut s = Sampler {
            problem,
            cfg,
            rng,
            c_coef,
            labels: vec![0; t_len],
            z: 0.0,
            omega: [1.0 / 3.0; 3],
            alpha: [0.0; 3],
            var: [1.0; 3],
            blocks,
            resid,
            n: [0; 3],
            sum: [0.0; 3],
        };
        s.initialise_mixture();
        s.refresh_stats();
        s.z = s.neg_loglik() + 1.0;
        Ok(s)
    }

    fn initialise_mixture(&mut self) {
        let mut sorted = self.resid.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let floor_var = 1e-12;
        if self.cfg.single_component {
            let v = stats::variance(&sorted).clamp(floor_var, self.cfg.c_var * 0.5);
            self.omega = [1.0, 0.0, 0.0];
            self.alpha = [stats::mean(&sorted); 3];
            self.var = [v; 3];
            self.labels.iter_mut().for_each(|l| *l = 0);
            return;
        }
        let q = |p| stats::quantile_sorted(&sorted, p);
        let spread = (q(0.9) - q(0.1)).abs().max(1e-6);
        let mut a = [q(0.5), q(0.2), q(0.8)];
        if !(a[1] < a[0]) {
            a[1] = a[0] - 0.01 * spread;
        }
        if !(a[2] > a[0]) {
            a[2] = a[0] + 0.01 * spread;
        }
        let n = sorted.len();
        let third = n / 3;
        let tercile_var = |s: &[f64]| stats::variance(s).max(floor_var);
        let mut v = [
            tercile_var(&sorted[third..n - third]),
            tercile_var(&sorted[..third]),
            tercile_var(&sorted[n - third..]),
        ];
        let sep = self.cfg.variance_separation;
        let cap = 0.5 * self.cfg.c_var;
        v[1] = v[1].min(cap);
        v[2] = v[2].min(cap);
        let limit = 0.5 * sep * v[1].min(v[2]);
        if !(v[0] < limit) {
            v[0] = limit;
        }
        self.omega = [1.0 / 3.0; 3];
        self.alpha = a;
        self.var = v;
        let mix = self.mixture();
        for (t, &e) in self.resid.iter().enumerate() {
            let r = mix.responsibilities(e);
            let mut best = 0;
            for l in 1..3 {
                if r[l] > r[best] {
                    best = l;
                }
            }
            self.labels[t] = best as u8;
        }
        if self.cfg.swap_initial_labels {
            for l in &mut self.labels {
                *l = match *l {
                    1 => 2,
                    2 => 1,
                    x => x,
                };
            }
        }
    }

    pub fn mixture(&self) -> MixtureParams {
        MixtureParams {
            weights: self.omega,
            means: self.alpha,
            sds: self.var.map(f64::sqrt),
        }
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    fn components(&self) -> usize {
        if self.cfg.single_component {
            1
        } else {
            3
        }
    }

    fn refresh_stats(&mut self) {
        self.n = [0; 3];
        self.sum = [0.0; 3];
        for (&l, &e) in self.labels.iter().zip(&self.resid) {
            let l = l as usize;
            self.n[l] += 1;
            self.sum[l] += e;
        }
    }

    /// Sum of squared deviations of component `l` around `a`.
    fn ss(&self, l: usize, a: f64) -> f64 {
        // recomputed directly: the expanded form loses precision when the
        // residual level is large relative to the spread
        let mut q = 0.0;
        for (&m, &e) in self.labels.iter().zip(&self.resid) {
            if m as usize == l {
                q += (e - a) * (e - a);
            }
        }
        q
    }

    /// Negative log-likelihood of the current state.
    pub fn neg_loglik(&self) -> f64 {
        let inv2 = self.var.map(|v| 0.5 / v);
        let mut n = [0usize; 3];
        let mut s = 0.0;
        for (&m, &e) in self.labels.iter().zip(&self.resid) {
            let l = m as usize;
            let d = e - self.alpha[l];
            n[l] += 1;
            s += d * d * inv2[l];
        }
        s + (0..3)
            .map(|l| 0.5 * n[l] as f64 * (LN_2PI + self.var[l].ln()))
            .sum::<f64>()
    }

    fn slack(&self) -> f64 {
        self.z - self.neg_loglik()
    }

    /// Step 1: `z = s + Exp(1)`.
    pub fn step1_slice(&mut self) {
        self.z = self.neg_loglik() + stats::exp1(&mut self.rng);
    }

    /// Step 2: relabel each observation among components that keep
    /// `s < z`, with probability proportional to the weights.
    pub fn step2_labels(&mut self) {
        if self.cfg.single_component {
            return;
        }
        let refresh = self.cfg.refresh_slice;
        let mut slack = self.slack();
        let half_log = self.var.map(|v| 0.5 * v.ln());
        let inv2 = self.var.map(|v| 0.5 / v);
        for t in 0..self.labels.len() {
            if refresh {
                slack = stats::exp1(&mut self.rng);
            }
            let e = self.resid[t];
            let c = self.labels[t] as usize;
            let dc = e - self.alpha[c];
            let cur = half_log[c] + dc * dc * inv2[c];
            let mut delta = [0.0; 3];
            let mut w = [0.0; 3];
            for l in 0..3 {
                if l == c {
                    w[l] = self.omega[l];
                    continue;
                }
                let d = e - self.alpha[l];
                delta[l] = half_log[l] + d * d * inv2[l] - cur;
                if delta[l] < slack {
                    w[l] = self.omega[l];
                }
            }
            let total: f64 = w.iter().sum();
            let mut u = self.rng.random::<f64>() * total;
            let mut pick = c;
            for l in 0..3 {
                if w[l] > 0.0 {
                    if u < w[l] {
                        pick = l;
                        break;
                    }
                    u -= w[l];
                }
            }
            if pick != c {
                slack -= delta[pick];
                self.labels[t] = pick as u8;
            }
        }
        self.refresh_stats();
        if refresh {
            self.step1_slice();
        }
    }

    /// Step 3: `omega ~ Dirichlet(n + 1)`.
    pub fn step3_weights(&mut self) {
        if self.cfg.single_component {
            return;
        }
        let a = [self.n[0] as f64 + 1.0, self.n[1] as f64 + 1.0, self.n[2] as f64 + 1.0];
        let w = stats::sample_dirichlet(&mut self.rng, &a);
        self.omega = [w[0], w[1], w[2]];
    }

    /// Order-constraint bounds for `alpha_l`.
    fn alpha_bounds(&self, l: usize) -> (f64, f64) {
        if self.cfg.single_component {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        match l {
            0 => (self.alpha[1], self.alpha[2]),
            1 => (f64::NEG_INFINITY, self.alpha[0]),
            _ => (self.alpha[0], f64::INFINITY),
        }
    }

    /// Slice interval for `alpha_l` before intersecting with the order
    /// constraints: `s - z` is quadratic in `alpha_l`.
    pub fn alpha_slice(&self, l: usize) -> (f64, f64) {
        self.alpha_slice_with(l, self.slack().max(0.0))
    }

    fn alpha_slice_with(&self, l: usize, slack: f64) -> (f64, f64) {
        let n = self.n[l];
        if n == 0 {
            return (f64::NEG_INFINITY, f64::INFINITY);
        }
        let mean = self.sum[l] / n as f64;
        let cur = self.alpha[l];
        let h2 = (cur - mean).powi(2) + 2.0 * self.var[l] * slack / n as f64;
        let h = h2.sqrt();
        (mean - h, mean + h)
    }

    fn draw_alpha(&mut self, l: usize, slack: f64) {
        let (bl, bu) = self.alpha_slice_with(l, slack);
        let (ol, ou) = self.alpha_bounds(l);
        let cur = self.alpha[l];
        let lo = bl.max(ol).min(cur);
        let hi = bu.min(ou).max(cur);
        if !(lo < hi) {
            return;
        }
        let sd = self.cfg.c_mean.sqrt();
        self.alpha[l] = stats::sample_truncnorm(&mut self.rng, 0.0, sd, lo, hi);
        if self.cfg.single_component {
            self.alpha = [self.alpha[0]; 3];
        }
    }

    /// Step 4: `alpha_l ~ N(0, c_mean)` truncated to the slice and order
    /// constraints. With slice refreshing the update is repeated a few
    /// times; each repeat only needs the component's sufficient statistics.
    pub fn step4_means(&mut self, l: usize) {
        if self.cfg.refresh_slice {
            for _ in 0..self.cfg.inner_updates.max(1) {
                let e = stats::exp1(&mut self.rng);
                self.draw_alpha(l, e);
            }
            self.step1_slice();
        } else {
            let slack = self.slack().max(0.0);
            self.draw_alpha(l, slack);
        }
    }

    fn var_bounds(&self, l: usize) -> (f64, f64) {
        let cap = self.cfg.c_var;
        if self.cfg.single_component {
            return (0.0, cap);
        }
        let sep = self.cfg.variance_separation;
        match l {
            0 => (0.0, cap.min(sep * self.var[1].min(self.var[2]))),
            _ => (self.var[0] / sep, cap),
        }
    }

    /// Slice interval for `sigma_l^2`. In `u = ln v` the component's share of
    /// `s` is `n u / 2 + Q e^{-u} / 2`, which is convex, so the two roots are
    /// found by bracketing bisection on either side of the minimum.
    pub fn var_slice(&self, l: usize) -> (f64, f64) {
        let q = self.ss(l, self.alpha[l]);
        self.var_slice_with(l, self.slack().max(0.0), q)
    }

    fn var_slice_with(&self, l: usize, slack: f64, q: f64) -> (f64, f64) {
        let n = self.n[l] as f64;
        if n == 0.0 {
            return (0.0, f64::INFINITY);
        }
        let g = |u: f64| 0.5 * n * u + 0.5 * q * (-u).exp();
        let u_cur = self.var[l].ln();
        let target = g(u_cur) + slack;
        let h = |u: f64| g(u) - target;
        let u_min = if q > 0.0 { (q / n).ln() } else { f64::NEG_INFINITY };
        // upper root: g grows linearly to the right of the minimum
        let mut a = u_cur.max(u_min);
        let mut step = 1.0;
        let mut b = a + step;
        while h(b) < 0.0 {
            a = b;
            step *= 2.0;
            b += step;
        }
        let upper = stats::bisect(h, a, b).exp();
        let lower = if q > 0.0 {
            let mut b = u_cur.min(u_min);
            let mut step = 1.0;
            let mut a = b - step;
            while h(a) < 0.0 {
                b = a;
                step *= 2.0;
                a -= step;
            }
            stats::bisect(h, a, b).exp()
        } else {
            0.0
        };
        (lower.min(self.var[l]), upper.max(self.var[l]))
    }

    fn draw_var(&mut self, l: usize, slack: f64, q: f64) {
        let (bl, bu) = self.var_slice_with(l, slack, q);
        let (cl, cu) = self.var_bounds(l);
        let lo = bl.max(cl);
        let hi = bu.min(cu);
        if !(lo < hi) {
            return;
        }
        let u: f64 = self.rng.random();
        let v = lo + (hi - lo) * u;
        if v > 0.0 {
            self.var[l] = v;
        }
        if self.cfg.single_component {
            self.var = [self.var[0]; 3];
        }
    }

    /// Step 5: `sigma_l^2` uniform on the slice intersected with the prior
    /// support and the separation constraints.
    pub fn step5_vars(&mut self, l: usize) {
        let q = self.ss(l, self.alpha[l]);
        if self.cfg.refresh_slice {
            for _ in 0..self.cfg.inner_updates.max(1) {
                let e = stats::exp1(&mut self.rng);
                self.draw_var(l, e, q);
            }
            self.step1_slice();
        } else {
            let slack = self.slack().max(0.0);
            self.draw_var(l, slack, q);
        }
    }

    fn weights_vec(&self) -> Vec<f64> {
        self.labels.iter().map(|&m| 0.5 / self.var[m as usize]).collect()
    }

    /// Step 6 for coefficient `j` of block `k`: draw the inclusion indicator
    /// and then `gamma_j` from its truncated prior on the slice.
    pub fn step6_coef(&mut self, k: usize, j: usize) {
        let blk = &self.problem.blocks[k];
        let t_len = self.problem.len();
        let state = &self.blocks[k];
        let w = self.weights_vec();
        // target for this block: y minus other blocks and component means
        let target: Vec<f64> = (0..t_len)
            .map(|t| self.resid[t] + state.fitted[t] - self.alpha[self.labels[t] as usize])
            .collect();
        let log_part: f64 = (0..3)
            .map(|l| 0.5 * self.n[l] as f64 * (LN_2PI + self.var[l].ln()))
            .sum();
        let zq = self.z - log_part;
        let was_in = state.include[j];
        let cur_gamma = state.gamma[j];

        // J_j = 0
        let mut f0 = vec![0.0; t_len];
        let mut inc0 = state.include.clone();
        inc0[j] = false;
        let mut g0 = state.gamma.clone();
        g0[j] = 0.0;
        let beta0 = beta_of(&blk.basis, &inc0, &g0);
        let mut feasible0 = false;
        if !self.cfg.force_include {
            blk.eval_into(&beta0, &mut f0);
            let q0: f64 = (0..t_len).map(|t| w[t] * (target[t] - f0[t]).powi(2)).sum();
            feasible0 = q0 < zq || !was_in;
        }

        // J_j = 1: fitted = base + gamma_j * g
        let mut inc1 = state.include.clone();
        inc1[j] = true;
        let beta_base = beta_of(&blk.basis, &inc1, &g0);
        let mut unit = vec![0.0; blk.dim()];
        unit[j] = 1.0;
        let beta_unit = beta_of(&blk.basis, &inc1, &unit);
        let mut base = vec![0.0; t_len];
        let mut g = vec![0.0; t_len];
        blk.eval_into(&beta_base, &mut base);
        blk.eval_into(&beta_unit, &mut g);
        let (mut qa, mut qb, mut qc) = (0.0, 0.0, 0.0);
        for t in 0..t_len {
            let r = target[t] - base[t];
            qa += w[t] * g[t] * g[t];
            qb += w[t] * r * g[t];
            qc += w[t] * r * r;
        }
        let mut region = quad_interval(qa, qb, qc - zq).map(|(lo, hi)| (lo.max(0.0), hi));
        if was_in {
            // the current value is feasible by construction; guard rounding
            region = Some(match region {
                Some((lo, hi)) => (lo.min(cur_gamma), hi.max(cur_gamma)),
                None => (cur_gamma, cur_gamma),
            });
        }
        let sd = (self.c_coef * self.var[0]).sqrt();
        let mass1 = match region {
            Some((lo, hi)) if lo < hi => stats::normal_mass(0.0, sd, lo, hi),
            _ => 0.0,
        };
        let p0 = if feasible0 { self.cfg.p_zero } else { 0.0 };
        let p1 = (1.0 - self.cfg.p_zero) * 2.0 * mass1;
        let take1 = if self.cfg.force_include {
            true
        } else if p0 + p1 <= 0.0 {
            was_in
        } else {
            self.rng.random::<f64>() * (p0 + p1) < p1
        };

        let state = &mut self.blocks[k];
        let old_fitted = std::mem::take(&mut state.fitted);
        if take1 {
            let (lo, hi) = region.unwrap_or((cur_gamma, cur_gamma));
            let gj = if lo < hi {
                stats::sample_truncnorm(&mut self.rng, 0.0, sd, lo, hi)
            } else {
                cur_gamma
            };
            state.include = inc1;
            state.gamma = g0;
            state.gamma[j] = gj;
            state.beta = beta_base.iter().zip(&beta_unit).map(|(a, b)| a + gj * b).collect();
            state.fitted = base.iter().zip(&g).map(|(a, b)| a + gj * b).collect();
        } else {
            state.include = inc0;
            state.gamma = g0;
            state.beta = beta0;
            state.fitted = f0;
        }
        for t in 0..t_len {
            self.resid[t] += old_fitted[t] - state.fitted[t];
        }
        self.refresh_stats();
        debug_assert!(
            self.neg_loglik() <= self.z + 1e-7 * self.z.abs().max(1.0),
            "slice violated after step 6"
        );
    }

    /// One full sweep of Steps 1 through 6.
    pub fn sweep(&mut self) {
        let refresh = self.cfg.refresh_slice;
        self.step1_slice();
        self.step2_labels();
        self.step3_weights();
        for l in 0..self.components() {
            self.step4_means(l);
        }
        for l in 0..self.components() {
            self.step5_vars(l);
        }
        for k in 0..self.blocks.len() {
            for j in 0..self.problem.blocks[k].dim() {
                if refresh {
                    self.step1_slice();
                }
                self.step6_coef(k, j);
            }
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn residuals(&self) -> &[f64] {
        &self.resid
    }

    /// Burn in, then accumulate posterior means over the retained sweeps.
    pub fn run(mut self) -> Result<Posterior> {
        for _ in 0..self.cfg.burn_in {
            self.sweep();
        }
        let t_len = self.problem.len();
        let kept = self.cfg.sweeps;
        let mut beta_sum: Vec<Vec<f64>> = self.blocks.iter().map(|b| vec![0.0; b.beta.len()]).collect();
        let mut inc_sum: Vec<Vec<f64>> = self.blocks.iter().map(|b| vec![0.0; b.beta.len()]).collect();
        let mut label_counts = vec![[0u32; 3]; t_len];
        let mut trace = MixtureTrace::default();
        let mut gamma_trace: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.blocks.len()];
        for _ in 0..kept {
            self.sweep();
            for (k, bs) in self.blocks.iter().enumerate() {
                for (acc, &b) in beta_sum[k].iter_mut().zip(&bs.beta) {
                    *acc += b;
                }
                for (acc, &i) in inc_sum[k].iter_mut().zip(&bs.include) {
                    if i {
                        *acc += 1.0;
                    }
                }
                if self.cfg.keep_traces {
                    gamma_trace[k].push(bs.gamma.clone());
                }
            }
            for (c, &m) in label_counts.iter_mut().zip(&self.labels) {
                c[m as usize] += 1;
            }
            trace.omega.push(self.omega);
            trace.alpha.push(self.alpha);
            trace.var.push(self.var);
        }
        let kf = kept as f64;
        let mut functions = Vec::with_capacity(self.blocks.len());
        for (k, blk) in self.problem.blocks.iter().enumerate() {
            let mean_beta: Vec<f64> = beta_sum[k].iter().map(|b| b / kf).collect();
            functions.push(MonotoneFunction::from_beta(blk.basis.clone(), &mean_beta, blk.bounds)?);
        }
        let avg3 = |rows: &[[f64; 3]]| {
            let mut m = [0.0; 3];
            for r in rows {
                for l in 0..3 {
                    m[l] += r[l] / kf;
                }
            }
            m
        };
        let var = avg3(&trace.var);
        let mixture = MixtureParams {
            weights: avg3(&trace.omega),
            means: avg3(&trace.alpha),
            sds: var.map(f64::sqrt),
        };
        let label_probs = label_counts
            .iter()
            .map(|c| [c[0] as f64 / kf, c[1] as f64 / kf, c[2] as f64 / kf])
            .collect();
        let inclusion = inc_sum.iter().map(|v| v.iter().map(|c| c / kf).collect()).collect();
        let warnings = trace.split_half_warnings(self.components());
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Posterior {
            functions,
            mixture,
            label_probs,
            inclusion,
            trace,
            gamma_trace: if self.cfg.keep_traces { Some(gamma_trace) } else { None },
            warnings,
        })
    }
}

/// Per-sweep mixture parameters.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MixtureTrace {
    pub omega: Vec<[f64; 3]>,
    pub alpha: Vec<[f64; 3]>,
    pub var: Vec<[f64; 3]>,
}

impl MixtureTrace {
    /// Compares first- and second-half means of each mixture parameter and
    /// reports shifts larger than four combined standard errors.
    pub fn split_half_warnings(&self, components: usize) -> Vec<String> {
        let n = self.omega.len();
        if n < 40 {
            return Vec::new();
        }
        let mut out = Vec::new();
        let series: [(&str, &Vec<[f64; 3]>); 3] = [("omega", &self.omega), ("alpha", &self.alpha), ("sigma2", &self.var)];
        for (name, rows) in series {
            for l in 0..components {
                let x: Vec<f64> = rows.iter().map(|r| r[l]).collect();
                let (a, b) = x.split_at(n / 2);
                let se = (stats::batch_means_se(a).powi(2) + stats::batch_means_se(b).powi(2)).sqrt();
                let shift = (stats::mean(a) - stats::mean(b)).abs();
                if se > 0.0 && shift > 4.0 * se {
                    out.push(format!(
                        "possible non-convergence: {name}[{}] split-half means differ by {shift:.3e} ({:.1} standard errors)",
                        l + 1,
                        shift / se
                    ));
                }
            }
        }
        out
    }
}

/// Posterior summaries from one sampler run.
#[derive(Debug, Clone)]
pub struct Posterior {
    /// Posterior-mean function for each block.
    pub functions: Vec<MonotoneFunction>,
    pub mixture: MixtureParams,
    pub label_probs: Vec<[f64; 3]>,
    pub inclusion: Vec<Vec<f64>>,
    pub trace: MixtureTrace,
    /// `[block][sweep][coefficient]` constrained coefficients.
    pub gamma_trace: Option<Vec<Vec<Vec<f64>>>>,
    pub warnings: Vec<String>,
}

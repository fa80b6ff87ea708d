//! Quadratic regression splines with monotonicity enforced through a
//! lower-triangular reparameterization `gamma = L_J beta_J`, where each row of
//! `L_J` is the spline derivative at a checkpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::Bounds;

pub const DEFAULT_KNOTS: usize = 25;

/// Knots `0 < k_1 < ... < k_m < 1` for the basis
/// `(b, b^2, (b-k_1)_+^2, ..., (b-k_m)_+^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        for (k, &v) in knots.iter().enumerate() {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Validation(format!("knot {k} = {v} outside (0,1)")));
            }
            if k > 0 && !(v > knots[k - 1]) {
                return Err(Error::Validation(format!("knots not strictly increasing at {k}")));
            }
        }
        Ok(SplineBasis { knots })
    }

    pub fn equally_spaced(m: usize) -> Self {
        SplineBasis {
            knots: (1..=m).map(|j| j as f64 / (m + 1) as f64).collect(),
        }
    }

    /// Knots at the `j/(m+1)` quantiles of the normalized training covariate,
    /// using only values strictly inside (0,1). Falls back to equal spacing
    /// when the data are too concentrated to give distinct knots.
    pub fn from_quantiles(b: &[f64], m: usize) -> Self {
        let mut inner: Vec<f64> = b.iter().copied().filter(|&v| v > 0.0 && v < 1.0).collect();
        if inner.len() < m + 2 {
            return Self::equally_spaced(m);
        }
        inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let knots: Vec<f64> = (1..=m)
            .map(|j| crate::stats::quantile_sorted(&inner, j as f64 / (m + 1) as f64))
            .collect();
        let min_gap = 1e-3 / (m + 1) as f64;
        let ok = knots.first().is_none_or(|&k| k > min_gap)
            && knots.last().is_none_or(|&k| k < 1.0 - min_gap)
            && knots.windows(2).all(|w| w[1] - w[0] > min_gap);
        if ok {
            SplineBasis { knots }
        } else {
            log::debug!("covariate too concentrated for quantile knots; using equal spacing");
            Self::equally_spaced(m)
        }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn m(&self) -> usize {
        self.knots.len()
    }

    /// Number of coefficients, `m + 2`.
    pub fn dim(&self) -> usize {
        self.knots.len() + 2
    }

    pub fn basis_row(&self, b: f64) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.dim());
        row.push(b);
        row.push(b * b);
        for &k in &self.knots {
            let d = (b - k).max(0.0);
            row.push(d * d);
        }
        row
    }

    /// Value of basis function `j` at `b`.
    #[inline]
    pub fn basis(&self, j: usize, b: f64) -> f64 {
        match j {
            0 => b,
            1 => b * b,
            _ => {
                let d = (b - self.knots[j - 2]).max(0.0);
                d * d
            }
        }
    }

    /// Derivative of basis function `j` at `b`.
    #[inline]
    pub fn basis_deriv(&self, j: usize, b: f64) -> f64 {
        match j {
            0 => 1.0,
            1 => 2.0 * b,
            _ => 2.0 * (b - self.knots[j - 2]).max(0.0),
        }
    }

    /// Checkpoint for each included coefficient, in coefficient order. The
    /// linear term is checked at 0; the quadratic term and each knot term are
    /// checked at the next included knot, or at 1 if there is none. Each
    /// coefficient's basis derivative is then positive at its own checkpoint
    /// and every later coefficient's derivative vanishes there, so `L_J` is
    /// lower triangular with a positive diagonal.
    pub fn checkpoints(&self, include: &[bool]) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.dim()).filter(|&j| include[j]).collect();
        let mut out = Vec::with_capacity(idx.len());
        for (q, &j) in idx.iter().enumerate() {
            if j == 0 {
                out.push(0.0);
                continue;
            }
            let next_knot = idx[q + 1..].iter().find(|&&l| l >= 2).map(|&l| self.knots[l - 2]);
            out.push(next_knot.unwrap_or(1.0));
        }
        out
    }

    /// Dense `L_J` over the included coefficients (rows: checkpoints).
    pub fn build_lj(&self, include: &[bool]) -> Vec<Vec<f64>> {
        let idx: Vec<usize> = (0..self.dim()).filter(|&j| include[j]).collect();
        let cps = self.checkpoints(include);
        let l: Vec<Vec<f64>> = cps
            .iter()
            .map(|&c| idx.iter().map(|&j| self.basis_deriv(j, c)).collect())
            .collect();
        for (q, row) in l.iter().enumerate() {
            debug_assert!(row[q] > 0.0, "L_J diagonal must be positive");
            debug_assert!(row[q + 1..].iter().all(|&v| v == 0.0), "L_J must be lower triangular");
        }
        l
    }

    /// `beta_J = L_J^{-1} gamma_J` by forward substitution.
    pub fn solve_lj(&self, include: &[bool], gamma: &[f64]) -> Vec<f64> {
        let l = self.build_lj(include);
        forward_substitute(&l, gamma)
    }
}

pub(crate) fn forward_substitute(l: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    for q in 0..n {
        let mut acc = rhs[q];
        for p in 0..q {
            acc -= l[q][p] * x[p];
        }
        x[q] = acc / l[q][q];
    }
    x
}

/// A monotone nondecreasing function of a raw covariate, stored in the
/// constrained parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneFunction {
    pub basis: SplineBasis,
    pub include: Vec<bool>,
    /// Constrained coefficients for the included terms, all `>= 0`.
    pub gamma: Vec<f64>,
    /// Training-window normalization of the covariate.
    pub bounds: Bounds,
    /// Horizontal shift on the normalized scale: `f(b) = g(b + shift)`.
    #[serde(default)]
    pub shift: f64,
}

impl MonotoneFunction {
    pub fn new(basis: SplineBasis, include: Vec<bool>, gamma: Vec<f64>, bounds: Bounds) -> Result<Self> {
        if include.len() != basis.dim() {
            return Err(Error::Validation(format!(
                "inclusion vector has length {}, basis needs {}",
                include.len(),
                basis.dim()
            )));
        }
        let d = include.iter().filter(|&&x| x).count();
        if gamma.len() != d {
            return Err(Error::Validation(format!("expected {d} constrained coefficients, got {}", gamma.len())));
        }
        if let Some(g) = gamma.iter().find(|&&g| !(g >= 0.0)) {
            return Err(Error::Validation(format!("constrained coefficient {g} is negative")));
        }
        Ok(MonotoneFunction {
            basis,
            include,
            gamma,
            bounds,
            shift: 0.0,
        })
    }

    /// The identically-zero function.
    pub fn zero(basis: SplineBasis, bounds: Bounds) -> Self {
        let include = vec![false; basis.dim()];
        MonotoneFunction {
            basis,
            include,
            gamma: Vec::new(),
            bounds,
            shift: 0.0,
        }
    }

    /// Builds the constrained form from a full-length unconstrained `beta`
    /// whose nonzero entries define `J`. Fails if the implied function is not
    /// monotone (beyond rounding).
    pub fn from_beta(basis: SplineBasis, beta: &[f64], bounds: Bounds) -> Result<Self> {
        let include: Vec<bool> = beta.iter().map(|&v| v != 0.0).collect();
        let beta_j: Vec<f64> = beta.iter().copied().filter(|&v| v != 0.0).collect();
        let l = basis.build_lj(&include);
        let scale = beta_j.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
        let mut gamma = Vec::with_capacity(beta_j.len());
        for row in &l {
            let g: f64 = row.iter().zip(&beta_j).map(|(a, b)| a * b).sum();
            if g < -1e-9 * scale {
                return Err(Error::Numerical(format!("coefficients violate monotonicity (gamma = {g})")));
            }
            gamma.push(g.max(0.0));
        }
        MonotoneFunction::new(basis, include, gamma, bounds)
    }

    /// Full-length unconstrained coefficients (zeros where excluded).
    pub fn beta(&self) -> Vec<f64> {
        let bj = self.basis.solve_lj(&self.include, &self.gamma);
        let mut out = vec![0.0; self.basis.dim()];
        let mut q = 0;
        for (j, &inc) in self.include.iter().enumerate() {
            if inc {
                out[j] = bj[q];
                q += 1;
            }
        }
        out
    }

    /// Evaluator with the coefficients precomputed.
    pub fn evaluator(&self) -> SplineEval {
        SplineEval::new(self.basis.clone(), self.beta(), self.bounds, self.shift)
    }

    /// Value at a normalized covariate (shift applied).
    pub fn eval(&self, b: f64) -> f64 {
        self.evaluator().eval(b)
    }

    /// Value at a raw covariate.
    pub fn eval_raw(&self, x: f64) -> f64 {
        self.eval(self.bounds.normalize(x))
    }

    /// `g(b) = f(b + b_bar)` with `b_bar` given on the raw scale.
    pub fn shifted(&self, raw_shift: f64) -> Self {
        let mut out = self.clone();
        out.shift += raw_shift / self.bounds.width();
        out
    }
}

/// Evaluates `sum_j beta_j basis_j(b)` with linear extension outside [0,1].
#[derive(Debug, Clone)]
pub struct SplineEval {
    basis: SplineBasis,
    beta: Vec<f64>,
    bounds: Bounds,
    shift: f64,
    f1: f64,
    d0: f64,
    d1: f64,
}

impl SplineEval {
    pub fn new(basis: SplineBasis, beta: Vec<f64>, bounds: Bounds, shift: f64) -> Self {
        let mut s = SplineEval {
            basis,
            beta,
            bounds,
            shift,
            f1: 0.0,
            d0: 0.0,
            d1: 0.0,
        };
        s.f1 = s.inner(1.0);
        s.d0 = s.deriv_inner(0.0);
        s.d1 = s.deriv_inner(1.0);
        s
    }

    fn inner(&self, b: f64) -> f64 {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| v * self.basis.basis(j, b))
            .sum()
    }

    fn deriv_inner(&self, b: f64) -> f64 {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| v * self.basis.basis_deriv(j, b))
            .sum()
    }

    /// Value at a normalized covariate.
    pub fn eval(&self, b: f64) -> f64 {
        let b = b + self.shift;
        if b < 0.0 {
            self.d0 * b
        } else if b > 1.0 {
            self.f1 + self.d1 * (b - 1.0)
        } else {
            self.inner(b)
        }
    }

    pub fn eval_raw(&self, x: f64) -> f64 {
        self.eval(self.bounds.normalize(x))
    }

    /// Derivative with respect to the normalized covariate.
    pub fn deriv(&self, b: f64) -> f64 {
        let b = b + self.shift;
        if b < 0.0 {
            self.d0
        } else if b > 1.0 {
            self.d1
        } else {
            self.deriv_inner(b)
        }
    }
}

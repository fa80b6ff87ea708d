//! Kernel density with locally adaptive bandwidth, following the
//! Shimazaki-Shinomoto local L2-risk rule on a binned grid: for each
//! candidate bandwidth the pointwise cost is smoothed over a window
//! proportional to that bandwidth, the locally cheapest bandwidth is kept at
//! every grid point, and the window stiffness is picked by the global cost.

use serde::{Deserialize, Serialize};

const GRID: usize = 400;
const N_BANDWIDTHS: usize = 40;
const STIFFNESS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    /// Bandwidth used at each grid point.
    pub bandwidth: Vec<f64>,
    /// All draws were identical; `x` holds that single value.
    pub point_mass: bool,
}

impl DensityReport {
    pub fn integral(&self) -> f64 {
        if self.point_mass {
            return 1.0;
        }
        let dx = self.x[1] - self.x[0];
        self.density.iter().sum::<f64>() * dx
    }

    /// Linear interpolation of the density at `v`.
    pub fn at(&self, v: f64) -> f64 {
        if self.point_mass || v < self.x[0] || v > *self.x.last().unwrap() {
            return 0.0;
        }
        let dx = self.x[1] - self.x[0];
        let pos = (v - self.x[0]) / dx;
        let k = (pos.floor() as usize).min(self.x.len() - 2);
        let f = pos - k as f64;
        self.density[k] * (1.0 - f) + self.density[k + 1] * f
    }
}

fn gauss(d: f64, w: f64) -> f64 {
    (-0.5 * (d / w).powi(2)).exp() / (w * (2.0 * std::f64::consts::PI).sqrt())
}

/// Smooths `y` (a density on a grid with spacing `dx`) with a Gaussian of
/// width `w[k]` centred on each source point `k`.
fn smooth(y: &[f64], w: &[f64], dx: f64) -> Vec<f64> {
    let n = y.len();
    let mut out = vec![0.0; n];
    for (k, &yk) in y.iter().enumerate() {
        if yk == 0.0 {
            continue;
        }
        let reach = (6.0 * w[k] / dx).ceil() as usize;
        for (i, o) in out.iter_mut().enumerate().take((k + reach + 1).min(n)).skip(k.saturating_sub(reach)) {
            *o += yk * gauss((i as f64 - k as f64) * dx, w[k]) * dx;
        }
    }
    out
}

/// Global L2-risk estimate of a binned estimate `yh` built with per-point
/// bandwidths `w` from histogram density `y` of `n` samples.
fn global_cost(yh: &[f64], y: &[f64], w: &[f64], dx: f64, n: usize) -> f64 {
    let sq: f64 = yh.iter().map(|v| v * v).sum::<f64>() * dx;
    let cross: f64 = yh.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() * dx;
    let self_term: f64 = y.iter().zip(w).map(|(yk, wk)| yk * gauss(0.0, *wk)).sum::<f64>() * dx / n as f64;
    sq - 2.0 * cross + 2.0 * self_term
}

/// Density table for a set of draws.
pub fn density_report(draws: &[f64]) -> DensityReport {
    let n = draws.len();
    let lo = draws.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = draws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if n == 0 || !(hi > lo) {
        return DensityReport {
            x: vec![if n == 0 { f64::NAN } else { lo }],
            density: vec![f64::INFINITY],
            bandwidth: vec![0.0],
            point_mass: true,
        };
    }
    let pad = 0.05 * (hi - lo);
    let (a, b) = (lo - pad, hi + pad);
    let dx = (b - a) / (GRID - 1) as f64;
    let x: Vec<f64> = (0..GRID).map(|k| a + k as f64 * dx).collect();
    let mut y = vec![0.0; GRID];
    for &d in draws {
        let k = (((d - a) / dx).round() as usize).min(GRID - 1);
        y[k] += 1.0 / (n as f64 * dx);
    }
    let w_min = 2.0 * dx;
    let w_max = (b - a) / 2.0;
    let widths: Vec<f64> = (0..N_BANDWIDTHS)
        .map(|k| w_min * (w_max / w_min).powf(k as f64 / (N_BANDWIDTHS - 1) as f64))
        .collect();
    // pointwise cost of each fixed-bandwidth estimate
    let costs: Vec<Vec<f64>> = widths
        .iter()
        .map(|&w| {
            let yh = smooth(&y, &vec![w; GRID], dx);
            yh.iter()
                .zip(&y)
                .map(|(h, v)| h * h - 2.0 * h * v + 2.0 * gauss(0.0, w) * v / n as f64)
                .collect()
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    for &gamma in &STIFFNESS {
        let local: Vec<Vec<f64>> = widths
            .iter()
            .zip(&costs)
            .map(|(&w, c)| smooth(c, &vec![gamma * w; GRID], dx))
            .collect();
        let chosen: Vec<f64> = (0..GRID)
            .map(|i| {
                let k = (0..N_BANDWIDTHS).min_by(|&p, &q| local[p][i].total_cmp(&local[q][i])).unwrap();
                widths[k]
            })
            .collect();
        let yv = smooth(&y, &chosen, dx);
        let cost = global_cost(&yv, &y, &chosen, dx, n);
        if best.as_ref().is_none_or(|b| cost < b.0) {
            best = Some((cost, yv, chosen));
        }
    }
    let (_, mut density, bandwidth) = best.expect("at least one stiffness");
    let mass: f64 = density.iter().sum::<f64>() * dx;
    for v in density.iter_mut() {
        *v /= mass;
    }
    DensityReport {
        x,
        density,
        bandwidth,
        point_mass: false,
    }
}

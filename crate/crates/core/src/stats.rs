//! Small numerical helpers shared across the crate: normal-distribution
//! functions, truncated-normal sampling, goodness-of-fit statistics and
//! counter-based RNG streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{PI, SQRT_2};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in the lower tail.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p < 0.5 {
        -SQRT_2 * erfc_inv(2.0 * p)
    } else {
        SQRT_2 * erfc_inv(2.0 * (1.0 - p))
    }
}

/// Inverse of [`norm_sf`]; stays accurate for tiny upper-tail probabilities.
pub fn norm_isf(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    SQRT_2 * erfc_inv(2.0 * q)
}

/// Mass of `N(0,1)` on `(a, b)`.
pub fn std_normal_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        norm_sf(a) - norm_sf(b)
    } else if b <= 0.0 {
        norm_cdf(b) - norm_cdf(a)
    } else {
        1.0 - norm_cdf(a) - norm_sf(b)
    }
}

/// Mass of `N(mean, sd^2)` on `(lo, hi)`.
pub fn normal_mass(mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    std_normal_mass((lo - mean) / sd, (hi - mean) / sd)
}

pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Uniform on the open interval (0, 1).
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Draw from `N(0,1)` truncated to `(a, b)`; either bound may be infinite.
pub fn sample_std_truncnorm<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    assert!(a < b, "empty truncation interval ({a}, {b})");
    if a > 0.0 {
        return sample_upper(rng, a, b);
    }
    if b < 0.0 {
        return -sample_upper(rng, -b, -a);
    }
    if a.is_finite() && b.is_finite() && b - a < 1.0 {
        return sample_uniform_reject(rng, a, b);
    }
    // Interval straddles zero: inversion is well conditioned.
    let lo = norm_cdf(a);
    let hi = norm_cdf(b);
    let u = lo + (hi - lo) * open01(rng);
    norm_ppf(u).clamp(a, b)
}

/// `N(mean, sd^2)` truncated to `(lo, hi)`.
pub fn sample_truncnorm<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    if !(a < b) {
        // Interval narrower than floating resolution of the standardisation.
        return 0.5 * (lo + hi);
    }
    (mean + sd * sample_std_truncnorm(rng, a, b)).clamp(lo, hi)
}

// 0 <= a < b <= inf
fn sample_upper<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if b.is_finite() && (b - a) * b <= 2.0 {
        return sample_uniform_reject(rng, a, b);
    }
    if a < 5.0 {
        let qa = norm_sf(a);
        let qb = norm_sf(b);
        let q = qb + (qa - qb) * open01(rng);
        return norm_isf(q).clamp(a, b);
    }
    // Exponential proposal for far tails.
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let x = a + exp1(rng) / lambda;
        if x >= b {
            continue;
        }
        let rho = (-0.5 * (x - lambda).powi(2)).exp();
        if open01(rng) <= rho {
            return x;
        }
    }
}

fn sample_uniform_reject<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let m = if a > 0.0 {
        a
    } else if b < 0.0 {
        b
    } else {
        0.0
    };
    loop {
        let x = a + (b - a) * rng.random::<f64>();
        let rho = (-0.5 * (x * x - m * m)).exp();
        if rng.random::<f64>() <= rho {
            return x;
        }
    }
}

/// Dirichlet draw built from independent gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    draws
}

/// Independent, reproducible stream `stream` under `seed`. Draw `k` of a
/// parallel simulation always sees the same numbers regardless of which
/// worker runs it.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for a sub-task `tag` of a run seeded with `seed` (splitmix64).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Linear-interpolation quantile (type 7) of unsorted data.
pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, p)
}

pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0);
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sided one-sample Kolmogorov-Smirnov statistic against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for sample size `n`.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Monte Carlo standard error of a chain mean by non-overlapping batch means.
pub fn batch_means_se(chain: &[f64]) -> f64 {
    let n = chain.len();
    let batches = ((n as f64).sqrt() as usize).clamp(2, 50);
    let size = n / batches;
    if size == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..batches)
        .map(|b| mean(&chain[b * size..(b + 1) * size]))
        .collect();
    (variance(&means) / batches as f64).sqrt()
}

/// Mixture of normals `sum_l w_l N(mean_l, sd_l^2)`.
pub fn mixture_cdf(weights: &[f64], means: &[f64], sds: &[f64], x: f64) -> f64 {
    weights
        .iter()
        .zip(means)
        .zip(sds)
        .map(|((w, m), s)| w * norm_cdf((x - m) / s))
        .sum()
}

pub fn mixture_sf(weights: &[f64], means: &[f64], sds: &[f64], x: f64) -> f64 {
    weights
        .iter()
        .zip(means)
        .zip(sds)
        .map(|((w, m), s)| w * norm_sf((x - m) / s))
        .sum()
}

pub fn mixture_pdf(weights: &[f64], means: &[f64], sds: &[f64], x: f64) -> f64 {
    weights
        .iter()
        .zip(means)
        .zip(sds)
        .map(|((w, m), s)| w * norm_pdf((x - m) / s) / s)
        .sum()
}

/// Quantile of a normal mixture by bracketing bisection. Uses the survival
/// function above the median so upper-tail quantiles keep full precision.
pub fn mixture_ppf(weights: &[f64], means: &[f64], sds: &[f64], p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let upper_tail = p > 0.5;
    let target = if upper_tail { 1.0 - p } else { p };
    // g is increasing in x in both branches
    let g = |x: f64| {
        if upper_tail {
            target - mixture_sf(weights, means, sds, x)
        } else {
            mixture_cdf(weights, means, sds, x) - target
        }
    };
    let z = norm_ppf(p).abs() + 1.0;
    let mut lo = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m - z * s)
        .fold(f64::INFINITY, f64::min);
    let mut hi = means
        .iter()
        .zip(sds)
        .map(|(m, s)| m + z * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let width = sds.iter().cloned().fold(0.0, f64::max).max(1e-12);
    while g(lo) > 0.0 {
        lo -= width;
    }
    while g(hi) < 0.0 {
        hi += width;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Root of a function that changes sign on `[lo, hi]`, by bisection to
/// floating resolution.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    debug_assert!(flo * f(hi) <= 0.0, "root not bracketed");
    let lo_negative = flo < 0.0;
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

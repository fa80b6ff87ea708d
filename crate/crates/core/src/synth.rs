//! Ground-truth panel generator: known monotone curves of a driver region's
//! supply, known disturbance mixtures and a known sparse-lag Gaussian
//! copula.

use chrono::{Duration, NaiveDateTime};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::copula::CopulaModel;
use crate::error::{Error, Result};
use crate::market::{build_supply, parse_timestamp, Arc, IngestOptions, MarketNetwork, PanelDataset, TransformSpec};
use crate::mcmc::MixtureParams;
use crate::stats;

/// Increasing curve `level + slope z + sum_k c_k (z - kappa_k)_+^2` in
/// `z = (x - lo) / (hi - lo)`; its derivative is piecewise linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCurve {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub slope: f64,
    #[serde(default)]
    pub kinks: Vec<(f64, f64)>,
}

impl TrueCurve {
    pub fn validate(&self) -> Result<()> {
        if !(self.hi > self.lo) || !(self.slope >= 0.0) || self.kinks.iter().any(|k| !(k.1 >= 0.0)) {
            return Err(Error::Validation(format!("curve {self:?} is not increasing")));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.lo) / (self.hi - self.lo);
        self.level + self.slope * z + self.kinks.iter().map(|&(k, c)| c * (z - k).max(0.0).powi(2)).sum::<f64>()
    }
}

/// Half-hourly load: daily sinusoid, weekend dip and AR(1) noise, all
/// relative to `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub base: f64,
    pub daily_amp: f64,
    /// Fraction of the day at which load peaks.
    pub peak: f64,
    pub weekend_drop: f64,
    pub noise_sd: f64,
    pub noise_ar: f64,
}

/// Signed net flow on an interconnector pair as fractions of capacity
/// (positive means the forward arc).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFlowSpec {
    pub mean: f64,
    pub daily_amp: f64,
    pub noise_sd: f64,
    pub noise_ar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcCostSpec {
    pub arc: String,
    /// Cost at full capacity; the cost is quadratic in the flow.
    pub scale: f64,
}

/// True latent VAR, matrices row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCopula {
    pub lags: Vec<usize>,
    pub coefs: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl TrueCopula {
    pub fn independent(r: usize) -> Self {
        TrueCopula {
            lags: vec![1],
            coefs: vec![vec![0.0; r * r]],
            sigma: DMatrix::<f64>::identity(r, r).as_slice().to_vec(),
        }
    }

    pub fn model(&self, r: usize) -> Result<CopulaModel> {
        let coefs = self.coefs.iter().map(|c| DMatrix::from_row_slice(r, r, c)).collect();
        let m = CopulaModel::new(self.lags.clone(), coefs, DMatrix::from_row_slice(r, r, &self.sigma))?;
        if m.spectral_radius() >= 1.0 {
            return Err(Error::Validation("true copula VAR is not stationary".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub network: MarketNetwork,
    pub start: String,
    pub period_minutes: u32,
    pub periods: usize,
    pub seed: u64,
    #[serde(default)]
    pub transform: TransformSpec,
    /// Region whose supply drives every price.
    pub driver: String,
    pub loads: Vec<LoadSpec>,
    /// Share of load noise variance coming from a factor common to all
    /// regions (weather, time of day).
    #[serde(default)]
    pub load_common: f64,
    /// One per interconnector pair, in network pair order.
    pub flows: Vec<PairFlowSpec>,
    /// One per price region, as a function of driver supply.
    pub curves: Vec<TrueCurve>,
    #[serde(default)]
    pub arc_costs: Vec<ArcCostSpec>,
    /// One per price region; component means are offsets from the curve.
    pub mixtures: Vec<MixtureParams>,
    pub copula: TrueCopula,
    #[serde(default = "yes")]
    pub noise: bool,
}

fn yes() -> bool {
    true
}

/// Every latent quantity behind a generated panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Truth {
    pub spec: GeneratorSpec,
    /// Regression means `[region][t]` (curve plus arc costs).
    pub eta: Vec<Vec<f64>>,
    pub eps: Vec<Vec<f64>>,
    /// Latent copula series.
    pub w: Vec<Vec<f64>>,
    /// Component labels drawn from their conditional distribution given eps.
    pub labels: Vec<Vec<u8>>,
    /// Prices clipped at the market cap.
    pub clipped: usize,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let r = self.network.n_regions();
        self.network.region_index(&self.driver)?;
        if self.loads.len() != r || self.curves.len() != r || self.mixtures.len() != r {
            return Err(Error::Validation(format!("loads, curves and mixtures need {r} entries each")));
        }
        if self.flows.len() != self.network.pairs().len() {
            return Err(Error::Validation("one flow spec per interconnector pair is required".into()));
        }
        if !(0.0..=1.0).contains(&self.load_common) {
            return Err(Error::Validation("load_common must lie in [0,1]".into()));
        }
        if parse_timestamp(&self.start).is_none() {
            return Err(Error::Validation(format!("bad start timestamp `{}`", self.start)));
        }
        if self.period_minutes == 0 || 1440 % self.period_minutes != 0 {
            return Err(Error::Validation("period must divide a day".into()));
        }
        for c in &self.curves {
            c.validate()?;
        }
        for m in &self.mixtures {
            if m.weights[1] > 0.0 || m.weights[2] > 0.0 {
                m.validate()?;
            }
        }
        for f in &self.flows {
            if f.mean.abs() > 1.0 {
                return Err(Error::Validation("flow means are fractions of capacity".into()));
            }
        }
        for c in &self.arc_costs {
            self.network.arc_index(&c.arc)?;
            if !(c.scale >= 0.0) {
                return Err(Error::Validation("arc costs must be increasing".into()));
            }
        }
        self.copula.model(r)?;
        Ok(())
    }

    pub fn periods_per_day(&self) -> usize {
        (1440 / self.period_minutes) as usize
    }

    /// Five-region preset with the NEM interconnectors. Victorian supply
    /// drives every price; the NSW response curve kinks early.
    pub fn nem(periods: usize, seed: u64) -> Self {
        let network = MarketNetwork::nem();
        let load = |base: f64, amp: f64| LoadSpec {
            base,
            daily_amp: amp,
            peak: 0.75,
            weekend_drop: 0.06,
            noise_sd: 0.03,
            noise_ar: 0.97,
        };
        // NSW, QLD, SA, TAS, VIC
        let loads = vec![load(4200.0, 0.14), load(3000.0, 0.10), load(750.0, 0.16), load(700.0, 0.08), load(2900.0, 0.14)];
        let flow = |mean: f64, amp: f64| PairFlowSpec {
            mean,
            daily_amp: amp,
            noise_sd: 0.25,
            noise_ar: 0.95,
        };
        let flows = vec![
            flow(0.1, 0.2),
            flow(0.3, 0.2),
            flow(0.15, 0.25),
            flow(-0.1, 0.3),
            flow(0.0, 0.3),
            flow(0.2, 0.2),
        ];
        let level = (1001.0f64 + 40.0).ln();
        let curve = |lv: f64, slope: f64, kinks: Vec<(f64, f64)>| TrueCurve {
            lo: 2000.0,
            hi: 4600.0,
            level: level + lv,
            slope,
            kinks,
        };
        let curves = vec![
            curve(0.01, 0.02, vec![(0.1, 0.5)]),
            curve(-0.01, 0.01, vec![(0.85, 0.15)]),
            curve(0.02, 0.02, vec![(0.75, 0.25)]),
            curve(0.0, 0.01, vec![(0.85, 0.1)]),
            curve(-0.005, 0.02, vec![(0.8, 0.2)]),
        ];
        let mix = |s1: f64, spike: f64| MixtureParams {
            weights: [0.93, 0.05, 0.02],
            means: [0.0, -0.015, spike],
            sds: [s1, 6.0 * s1, 0.5],
        };
        let mixtures = vec![mix(0.012, 0.15), mix(0.01, 0.12), mix(0.015, 0.2), mix(0.012, 0.1), mix(0.01, 0.15)];
        let arc_costs = ["v6", "v8", "v10", "v11"]
            .iter()
            .map(|a| ArcCostSpec {
                arc: a.to_string(),
                scale: 0.01,
            })
            .collect();
        // latent VAR: strong own persistence, a same-time-yesterday lag,
        // VIC linked to NSW, SA and TAS, QLD nearly on its own
        let d = |v: [f64; 5]| DMatrix::from_diagonal(&DVector::from_row_slice(&v));
        let mut a1 = d([0.7, 0.75, 0.6, 0.7, 0.65]);
        a1[(0, 4)] = 0.1;
        a1[(2, 4)] = 0.12;
        a1[(3, 4)] = 0.08;
        a1[(4, 0)] = 0.05;
        let a2 = d([0.1, 0.05, 0.1, 0.05, 0.1]);
        let a48 = d([0.12, 0.15, 0.1, 0.12, 0.12]);
        let mut sigma = DMatrix::<f64>::identity(5, 5) * 0.3;
        for &(a, b, c) in &[(0, 4, 0.12), (2, 4, 0.14), (3, 4, 0.1), (0, 2, 0.06), (0, 1, 0.02)] {
            sigma[(a, b)] = c;
            sigma[(b, a)] = c;
        }
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        let ppd = 48;
        let copula = TrueCopula {
            lags: vec![1, 2, ppd],
            coefs: vec![row_major(&a1), row_major(&a2), row_major(&a48)],
            sigma: row_major(&sigma),
        };
        GeneratorSpec {
            network,
            start: "2010-01-01T00:00:00".into(),
            period_minutes: 30,
            periods,
            seed,
            transform: TransformSpec::default(),
            driver: "VIC".into(),
            loads,
            load_common: 0.7,
            flows,
            curves,
            arc_costs,
            mixtures,
            copula,
            noise: true,
        }
    }

    /// One region, no interconnectors, independent disturbances:
    /// `pi_t = curve(b_t) + eps_t`.
    pub fn single_region(periods: usize, curve: TrueCurve, mixture: MixtureParams, seed: u64) -> Self {
        let network = MarketNetwork::new(vec!["R".into()], Vec::<Arc>::new(), vec![]).expect("valid");
        let base = 0.5 * (curve.lo + curve.hi);
        GeneratorSpec {
            network,
            start: "2010-01-01T00:00:00".into(),
            period_minutes: 30,
            periods,
            seed,
            transform: TransformSpec::default(),
            driver: "R".into(),
            loads: vec![LoadSpec {
                base,
                daily_amp: 0.12,
                peak: 0.75,
                weekend_drop: 0.05,
                noise_sd: 0.06,
                noise_ar: 0.9,
            }],
            load_common: 0.0,
            flows: vec![],
            curves: vec![curve],
            arc_costs: vec![],
            mixtures: vec![mixture],
            copula: TrueCopula::independent(1),
            noise: true,
        }
    }
}

fn ar1_noise(rng: &mut impl Rng, n: usize, sd: f64, ar: f64) -> Vec<f64> {
    let innov = sd * (1.0 - ar * ar).max(0.0).sqrt();
    let mut x = sd * rng.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| {
            let v = x;
            x = ar * x + innov * rng.sample::<f64, _>(StandardNormal);
            v
        })
        .collect()
}

/// Generates a validated panel and its truth record. Each component uses
/// its own random stream derived from the spec seed.
pub fn generate(spec: &GeneratorSpec) -> Result<(PanelDataset, Truth)> {
    spec.validate()?;
    let net = &spec.network;
    let r = net.n_regions();
    let n = spec.periods;
    if n == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let ppd = spec.periods_per_day();
    let start = parse_timestamp(&spec.start).expect("validated");
    let step = Duration::minutes(spec.period_minutes as i64);
    let stamps: Vec<NaiveDateTime> = (0..n).map(|t| start + step * t as i32).collect();
    let two_pi = 2.0 * std::f64::consts::PI;

    let common = ar1_noise(&mut stats::stream_rng(spec.seed, 99), n, 1.0, 0.97);
    let (wc, wi) = (spec.load_common.sqrt(), (1.0 - spec.load_common).sqrt());
    let load: Vec<Vec<f64>> = spec
        .loads
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let mut rng = stats::stream_rng(spec.seed, 100 + k as u64);
            let idio = ar1_noise(&mut rng, n, 1.0, l.noise_ar);
            let noise: Vec<f64> = idio.iter().zip(&common).map(|(a, c)| l.noise_sd * (wi * a + wc * c)).collect();
            (0..n)
                .map(|t| {
                    let frac = (t % ppd) as f64 / ppd as f64;
                    let day = (stamps[t].and_utc().timestamp() / 86_400 + 4) % 7; // 0 = Sunday
                    let weekend = if day == 0 || day == 6 { l.weekend_drop } else { 0.0 };
                    let shape = 1.0 + l.daily_amp * (two_pi * (frac - l.peak + 0.25)).sin() - weekend + noise[t];
                    (l.base * shape).max(0.05 * l.base)
                })
                .collect()
        })
        .collect();

    let mut flow = vec![vec![0.0; n]; net.n_arcs()];
    for (p, (&(fwd, rev), fs)) in net.pairs().iter().zip(&spec.flows).enumerate() {
        let mut rng = stats::stream_rng(spec.seed, 200 + p as u64);
        let noise = ar1_noise(&mut rng, n, fs.noise_sd, fs.noise_ar);
        let cap_f = net.arcs()[fwd].max_capacity;
        let cap_r = net.arcs()[rev].max_capacity;
        for t in 0..n {
            let frac = (t % ppd) as f64 / ppd as f64;
            let s = (fs.mean + fs.daily_amp * (two_pi * frac).sin() + noise[t]).clamp(-1.0, 1.0);
            if s > 0.0 {
                flow[fwd][t] = s * cap_f;
            } else {
                flow[rev][t] = -s * cap_r;
            }
        }
    }
    let loss = vec![vec![0.0; n]; r];
    let driver = net.region_index(&spec.driver)?;
    let supply = build_supply(net, &load, &flow, &loss, driver)?;

    let costs: Vec<(usize, usize, f64)> = spec
        .arc_costs
        .iter()
        .map(|c| {
            let a = net.arc_index(&c.arc).expect("validated");
            (a, net.destination_index(a), c.scale)
        })
        .filter(|&(a, _, _)| net.origin_index(a) == driver)
        .collect();
    let eta: Vec<Vec<f64>> = (0..r)
        .map(|j| {
            (0..n)
                .map(|t| {
                    let mut v = spec.curves[j].eval(supply[t]);
                    for &(a, dest, scale) in &costs {
                        if dest == j {
                            v += scale * (flow[a][t] / net.arcs()[a].max_capacity).powi(2);
                        }
                    }
                    v
                })
                .collect()
        })
        .collect();

    let model = spec.copula.model(r)?;
    let w = simulate_latent_path(&model, n, spec.seed)?;
    let mut eps = vec![vec![0.0; n]; r];
    let mut labels = vec![vec![0u8; n]; r];
    if spec.noise {
        let mut rng = stats::stream_rng(spec.seed, 400);
        for j in 0..r {
            let mix = &spec.mixtures[j];
            for t in 0..n {
                let z = w[j][t] / model.marginal_sd[j];
                let e = if z > 0.0 {
                    upper_quantile(mix, stats::norm_sf(z))
                } else {
                    mix.ppf(stats::norm_cdf(z))
                };
                eps[j][t] = e;
                let resp = mix.responsibilities(e);
                let u: f64 = rng.random();
                labels[j][t] = if u < resp[0] {
                    0
                } else if u < resp[0] + resp[1] {
                    1
                } else {
                    2
                };
            }
        }
    }
    let log_cap = (spec.transform.price_cap + spec.transform.floor_offset).ln();
    let mut clipped = 0;
    let price: Vec<Vec<f64>> = (0..r)
        .map(|j| {
            (0..n)
                .map(|t| {
                    let pi = eta[j][t] + eps[j][t];
                    if pi > log_cap {
                        clipped += 1;
                        spec.transform.price_cap
                    } else {
                        spec.transform.price(pi)
                    }
                })
                .collect()
        })
        .collect();
    let options = IngestOptions {
        lenient_complementarity: false,
        transform: spec.transform,
    };
    let data = PanelDataset::new(net.clone(), stamps, price, load, flow, None, &options)?;
    Ok((
        data,
        Truth {
            spec: spec.clone(),
            eta,
            eps,
            w,
            labels,
            clipped,
        },
    ))
}

fn upper_quantile(mix: &MixtureParams, q: f64) -> f64 {
    if q > 1e-12 {
        return mix.ppf(1.0 - q);
    }
    let mut lo = mix.ppf(0.5);
    let mut hi = lo + 1.0;
    while mix.sf(hi) > q {
        lo = hi;
        hi += 2.0 * (hi - mix.ppf(0.5));
    }
    stats::bisect(|x| q - mix.sf(x), lo, hi)
}

fn simulate_latent_path(model: &CopulaModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let r = model.r;
    let p = model.order();
    let burn = 20 * p + 200;
    let chol = model.innovation_factor();
    let coefs: Vec<DMatrix<f64>> = (0..model.lags.len()).map(|k| model.coef(k)).collect();
    let mut rng = stats::stream_rng(seed, 300);
    let mut path: Vec<DVector<f64>> = Vec::with_capacity(burn + n + p);
    path.extend((0..p).map(|_| DVector::zeros(r)));
    for _ in 0..burn + n {
        let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut next = &chol * z;
        let len = path.len();
        for (a, &h) in coefs.iter().zip(&model.lags) {
            next += a * &path[len - h];
        }
        path.push(next);
    }
    let tail = &path[path.len() - n..];
    Ok((0..r).map(|j| tail.iter().map(|v| v[j]).collect()).collect())
}

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::network::MarketNetwork;
use super::transform::{log_transform, TransformSpec};
use crate::error::{Error, Result};

/// Validation switches applied when a dataset is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Zero the smaller flow of a pair when both directions are positive,
    /// instead of failing.
    pub lenient_complementarity: bool,
    pub transform: TransformSpec,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            lenient_complementarity: false,
            transform: TransformSpec::default(),
        }
    }
}

/// Aligned regional panel. Series are stored as `[series][t]`, with regions
/// and arcs in network order.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    network: MarketNetwork,
    timestamps: Vec<NaiveDateTime>,
    period_minutes: u32,
    price: Vec<Vec<f64>>,
    load: Vec<Vec<f64>>,
    flow: Vec<Vec<f64>>,
    loss_adj: Vec<Vec<f64>>,
    supply: Vec<Vec<f64>>,
    log_price: Vec<Vec<f64>>,
    transform: TransformSpec,
}

fn check_shape(name: &str, series: &[Vec<f64>], n: usize, t: usize) -> Result<()> {
    if series.len() != n {
        return Err(Error::Validation(format!("{name}: expected {n} series, got {}", series.len())));
    }
    if let Some(k) = series.iter().position(|s| s.len() != t) {
        return Err(Error::Validation(format!(
            "{name}: series {k} has length {}, expected {t}",
            series[k].len()
        )));
    }
    Ok(())
}

/// Period length implied by a timestamp column; errors name the first stamp
/// that breaks equal spacing.
pub fn period_of(file: &str, stamps: &[NaiveDateTime]) -> Result<u32> {
    if stamps.len() < 2 {
        return Ok(30);
    }
    let step = stamps[1] - stamps[0];
    if step.num_seconds() <= 0 || step.num_seconds() % 60 != 0 {
        return Err(Error::Alignment {
            file: file.to_string(),
            stamp: stamps[1].to_string(),
        });
    }
    for w in stamps.windows(2) {
        if w[1] - w[0] != step {
            return Err(Error::Alignment {
                file: file.to_string(),
                stamp: w[1].to_string(),
            });
        }
    }
    Ok(step.num_minutes() as u32)
}

/// Supply for region `i`: load plus exports minus imports plus the loss
/// adjustment.
pub fn build_supply(
    network: &MarketNetwork,
    load: &[Vec<f64>],
    flow: &[Vec<f64>],
    loss_adj: &[Vec<f64>],
    region: usize,
) -> Result<Vec<f64>> {
    if region >= network.n_regions() {
        return Err(Error::UnknownRegion(format!("#{region}")));
    }
    let out = network.outgoing(region);
    let inc = network.incoming(region);
    let t_len = load[region].len();
    let mut s = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut v = load[region][t];
        for &a in &out {
            v += flow[a][t];
        }
        for &a in &inc {
            v -= flow[a][t];
        }
        v += loss_adj[region][t];
        s.push(v);
    }
    Ok(s)
}

impl PanelDataset {
    /// Validates raw series and derives supply and log price.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        network: MarketNetwork,
        timestamps: Vec<NaiveDateTime>,
        price: Vec<Vec<f64>>,
        load: Vec<Vec<f64>>,
        mut flow: Vec<Vec<f64>>,
        loss_adj: Option<Vec<Vec<f64>>>,
        options: &IngestOptions,
    ) -> Result<Self> {
        options.transform.validate()?;
        let t_len = timestamps.len();
        if t_len == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let r = network.n_regions();
        let loss_adj = loss_adj.unwrap_or_else(|| vec![vec![0.0; t_len]; r]);
        check_shape("price", &price, r, t_len)?;
        check_shape("load", &load, r, t_len)?;
        check_shape("flow", &flow, network.n_arcs(), t_len)?;
        check_shape("loss_adj", &loss_adj, r, t_len)?;
        let period_minutes = period_of("dataset", &timestamps)?;

        for (a, series) in flow.iter().enumerate() {
            for (t, &v) in series.iter().enumerate() {
                if !(v >= 0.0) {
                    return Err(Error::NegativeFlow {
                        arc: network.arcs()[a].id.clone(),
                        t,
                        value: v,
                    });
                }
            }
        }
        for &(f, rv) in network.pairs() {
            for t in 0..t_len {
                if flow[f][t] > 0.0 && flow[rv][t] > 0.0 {
                    if !options.lenient_complementarity {
                        return Err(Error::Complementarity {
                            forward: network.arcs()[f].id.clone(),
                            reverse: network.arcs()[rv].id.clone(),
                            t,
                        });
                    }
                    log::warn!(
                        "zeroing smaller flow of pair {}/{} at t={t}",
                        network.arcs()[f].id,
                        network.arcs()[rv].id
                    );
                    if flow[f][t] < flow[rv][t] {
                        flow[f][t] = 0.0;
                    } else {
                        flow[rv][t] = 0.0;
                    }
                }
            }
        }

        let floor = options.transform.floor_price();
        let mut log_price = Vec::with_capacity(r);
        for (j, series) in price.iter().enumerate() {
            let mut lp = Vec::with_capacity(t_len);
            for (t, &p) in series.iter().enumerate() {
                if !(p >= floor - 1e-9) {
                    return Err(Error::Validation(format!(
                        "price {p} below floor {floor} in region {} at t={t}",
                        network.regions()[j]
                    )));
                }
                lp.push(log_transform(p, &options.transform)?);
            }
            log_price.push(lp);
        }

        let mut supply = Vec::with_capacity(r);
        for i in 0..r {
            let s = build_supply(&network, &load, &flow, &loss_adj, i)?;
            if let Some(t) = s.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::Validation(format!(
                    "non-positive supply {} in region {} at t={t}",
                    s[t],
                    network.regions()[i]
                )));
            }
            supply.push(s);
        }

        Ok(PanelDataset {
            network,
            timestamps,
            period_minutes,
            price,
            load,
            flow,
            loss_adj,
            supply,
            log_price,
            transform: options.transform,
        })
    }

    pub fn network(&self) -> &MarketNetwork {
        &self.network
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn period_minutes(&self) -> u32 {
        self.period_minutes
    }

    pub fn periods_per_day(&self) -> usize {
        (24 * 60 / self.period_minutes.max(1)) as usize
    }

    pub fn transform(&self) -> &TransformSpec {
        &self.transform
    }

    pub fn price(&self) -> &[Vec<f64>] {
        &self.price
    }

    pub fn load(&self) -> &[Vec<f64>] {
        &self.load
    }

    pub fn flow(&self) -> &[Vec<f64>] {
        &self.flow
    }

    pub fn loss_adj(&self) -> &[Vec<f64>] {
        &self.loss_adj
    }

    pub fn supply(&self) -> &[Vec<f64>] {
        &self.supply
    }

    pub fn log_price(&self) -> &[Vec<f64>] {
        &self.log_price
    }

    /// Sub-panel over `range`, revalidated.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<PanelDataset> {
        if range.end > self.len() || range.start >= range.end {
            return Err(Error::Validation(format!(
                "slice {}..{} outside dataset of length {}",
                range.start,
                range.end,
                self.len()
            )));
        }
        let cut = |v: &[Vec<f64>]| v.iter().map(|s| s[range.clone()].to_vec()).collect::<Vec<_>>();
        Ok(PanelDataset {
            network: self.network.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            period_minutes: self.period_minutes,
            price: cut(&self.price),
            load: cut(&self.load),
            flow: cut(&self.flow),
            loss_adj: cut(&self.loss_adj),
            supply: cut(&self.supply),
            log_price: cut(&self.log_price),
            transform: self.transform,
        })
    }

    /// Averages consecutive periods in groups of `k` (2 turns half-hourly
    /// data into hourly). Log prices are averaged on the log scale; opposing
    /// flows within a group are netted so complementarity survives.
    pub fn aggregate(&self, k: usize) -> Result<PanelDataset> {
        if k == 0 {
            return Err(Error::Config("aggregation factor must be positive".into()));
        }
        let n = self.len() / k;
        if n == 0 {
            return Err(Error::InsufficientData { needed: k, got: self.len() });
        }
        let avg = |s: &[f64]| (0..n).map(|g| s[g * k..(g + 1) * k].iter().sum::<f64>() / k as f64).collect::<Vec<_>>();
        let load: Vec<_> = self.load.iter().map(|s| avg(s)).collect();
        let loss_adj: Vec<_> = self.loss_adj.iter().map(|s| avg(s)).collect();
        let mut flow: Vec<_> = self.flow.iter().map(|s| avg(s)).collect();
        for &(f, r) in self.network.pairs() {
            for g in 0..n {
                let net = flow[f][g] - flow[r][g];
                flow[f][g] = net.max(0.0);
                flow[r][g] = (-net).max(0.0);
            }
        }
        let price: Vec<_> = self
            .log_price
            .iter()
            .map(|s| avg(s).into_iter().map(|lp| self.transform.price(lp)).collect())
            .collect();
        let timestamps = (0..n).map(|g| self.timestamps[g * k]).collect();
        PanelDataset::new(
            self.network.clone(),
            timestamps,
            price,
            load,
            flow,
            Some(loss_adj),
            &IngestOptions {
                lenient_complementarity: false,
                transform: self.transform,
            },
        )
    }
}

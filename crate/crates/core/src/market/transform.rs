use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Price transform settings shared by fitting and forecasting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    /// Added to prices before taking logs; one dollar above the market floor.
    pub floor_offset: f64,
    /// Market price cap in $/MWh. Expected prices are truncated at ten times
    /// this value to keep heavy-tailed draws from blowing up the mean.
    #[serde(default = "default_cap")]
    pub price_cap: f64,
}

fn default_cap() -> f64 {
    12_500.0
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            floor_offset: 1001.0,
            price_cap: default_cap(),
        }
    }
}

impl TransformSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor_offset > 0.0) {
            return Err(Error::Config(format!("floor_offset must be positive, got {}", self.floor_offset)));
        }
        if !(self.price_cap > 0.0) {
            return Err(Error::Config(format!("price_cap must be positive, got {}", self.price_cap)));
        }
        Ok(())
    }

    /// Lowest admissible price (the market floor).
    pub fn floor_price(&self) -> f64 {
        1.0 - self.floor_offset
    }

    pub fn log_price(&self, price: f64) -> Result<f64> {
        log_transform(price, self)
    }

    pub fn price(&self, log_price: f64) -> f64 {
        inverse_log_transform(log_price, self)
    }

    /// Log-price ceiling used when averaging draws back on the dollar scale.
    pub fn log_cap(&self) -> f64 {
        (10.0 * self.price_cap + self.floor_offset).ln()
    }
}

pub fn log_transform(price: f64, spec: &TransformSpec) -> Result<f64> {
    let shifted = price + spec.floor_offset;
    if !(shifted > 0.0) || !price.is_finite() {
        return Err(Error::Domain {
            what: "log price transform",
            value: price,
        });
    }
    Ok(shifted.ln())
}

pub fn inverse_log_transform(log_price: f64, spec: &TransformSpec) -> f64 {
    log_price.exp() - spec.floor_offset
}

/// Training-window range of a covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) {
            return Err(Error::DegenerateCovariate(min));
        }
        Ok(Bounds { min, max })
    }

    /// Range of a series. Flow costs are anchored at zero flow, so callers
    /// pass `anchor_zero` to use (0, max) instead of the observed minimum.
    pub fn of(x: &[f64], anchor_zero: bool) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in x {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if x.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if anchor_zero {
            lo = 0.0;
            hi = hi.max(0.0);
        }
        Bounds::new(lo, hi)
    }

    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn denormalize(&self, b: f64) -> f64 {
        self.min + b * (self.max - self.min)
    }
}

/// Maps a series into [0,1] using training bounds. Values outside the training
/// range map outside [0,1]; the returned count says how many did.
pub fn normalize_covariate(x: &[f64], bounds: &Bounds) -> Result<(Vec<f64>, usize)> {
    if !(bounds.max > bounds.min) {
        return Err(Error::DegenerateCovariate(bounds.min));
    }
    let out: Vec<f64> = x.iter().map(|&v| bounds.normalize(v)).collect();
    let outside = out.iter().filter(|&&b| !(0.0..=1.0).contains(&b)).count();
    if outside > 0 {
        log::debug!("{outside} covariate values fall outside the training range");
    }
    Ok((out, outside))
}

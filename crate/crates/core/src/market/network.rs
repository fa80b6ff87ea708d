use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};

/// A directed interconnector flow variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub id: String,
    pub origin: String,
    pub destination: String,
    /// Nominal capacity in MWh per period.
    pub nominal_capacity: f64,
    /// Largest flow observed historically; used as the operating bound.
    pub max_capacity: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct RawNetwork {
    regions: Vec<String>,
    arcs: Vec<Arc>,
    #[serde(default)]
    pairs: Vec<(String, String)>,
}

/// Regions, directed arcs and the pairing of arcs into physical
/// interconnectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct MarketNetwork {
    regions: Vec<String>,
    arcs: Vec<Arc>,
    #[serde(rename = "pairs")]
    arc_pairs: Vec<(String, String)>,
    #[serde(skip)]
    pair_index: Vec<(usize, usize)>,
}

impl TryFrom<RawNetwork> for MarketNetwork {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        MarketNetwork::new(raw.regions, raw.arcs, raw.pairs)
    }
}

impl MarketNetwork {
    pub fn new(regions: Vec<String>, arcs: Vec<Arc>, arc_pairs: Vec<(String, String)>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::Validation("network has no regions".into()));
        }
        let mut seen = HashMap::new();
        for (k, r) in regions.iter().enumerate() {
            if seen.insert(r.as_str(), k).is_some() {
                return Err(Error::Validation(format!("duplicate region `{r}`")));
            }
        }
        let mut arc_ids = HashMap::new();
        for (k, a) in arcs.iter().enumerate() {
            if arc_ids.insert(a.id.as_str(), k).is_some() {
                return Err(Error::Validation(format!("duplicate arc `{}`", a.id)));
            }
            if !seen.contains_key(a.origin.as_str()) {
                return Err(Error::UnknownRegion(a.origin.clone()));
            }
            if !seen.contains_key(a.destination.as_str()) {
                return Err(Error::UnknownRegion(a.destination.clone()));
            }
            if a.origin == a.destination {
                return Err(Error::Validation(format!("arc `{}` has origin equal to destination", a.id)));
            }
            if !(a.nominal_capacity > 0.0 && a.max_capacity > 0.0) {
                return Err(Error::Validation(format!("arc `{}` needs positive capacities", a.id)));
            }
        }
        let mut paired = vec![0usize; arcs.len()];
        let mut pair_index = Vec::with_capacity(arc_pairs.len());
        for (f, r) in &arc_pairs {
            let fi = *arc_ids.get(f.as_str()).ok_or_else(|| Error::UnknownArc(f.clone()))?;
            let ri = *arc_ids.get(r.as_str()).ok_or_else(|| Error::UnknownArc(r.clone()))?;
            if fi == ri {
                return Err(Error::Validation(format!("arc `{f}` paired with itself")));
            }
            if arcs[fi].origin != arcs[ri].destination || arcs[fi].destination != arcs[ri].origin {
                return Err(Error::Validation(format!("arcs `{f}` and `{r}` are not opposite directions")));
            }
            paired[fi] += 1;
            paired[ri] += 1;
            pair_index.push((fi, ri));
        }
        if let Some(k) = paired.iter().position(|&c| c != 1) {
            return Err(Error::Validation(format!(
                "arc `{}` must appear in exactly one pair (found {})",
                arcs[k].id, paired[k]
            )));
        }
        Ok(MarketNetwork {
            regions,
            arcs,
            arc_pairs,
            pair_index,
        })
    }

    /// The five-region NEM topology with its twelve directed flows.
    pub fn nem() -> Self {
        let spec: [(&str, &str, &str, f64, f64); 12] = [
            ("v1", "QLD", "NSW", 180.0, 231.0),
            ("v2", "NSW", "QLD", 180.0, 50.0),
            ("v3", "QLD", "NSW", 1078.0, 1078.0),
            ("v4", "NSW", "QLD", 700.0, 410.0),
            ("v5", "NSW", "VIC", 1350.0, 1348.0),
            ("v6", "VIC", "NSW", 1550.0, 1525.0),
            ("v7", "SA", "VIC", 460.0, 455.0),
            ("v8", "VIC", "SA", 460.0, 457.0),
            ("v9", "SA", "VIC", 220.0, 172.0),
            ("v10", "VIC", "SA", 220.0, 220.0),
            ("v11", "VIC", "TAS", 480.0, 478.0),
            ("v12", "TAS", "VIC", 600.0, 594.0),
        ];
        let arcs = spec
            .iter()
            .map(|&(id, o, d, nom, max)| Arc {
                id: id.into(),
                origin: o.into(),
                destination: d.into(),
                nominal_capacity: nom,
                max_capacity: max,
            })
            .collect();
        let pairs = (0..6)
            .map(|k| (format!("v{}", 2 * k + 1), format!("v{}", 2 * k + 2)))
            .collect();
        let regions = ["NSW", "QLD", "SA", "TAS", "VIC"].iter().map(|s| s.to_string()).collect();
        MarketNetwork::new(regions, arcs, pairs).expect("NEM preset is valid")
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn regions(&self) -> &[String] {
        &self.regions
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn n_arcs(&self) -> usize {
        self.arcs.len()
    }

    /// Arc index pairs `(forward, reverse)`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pair_index
    }

    pub fn arc_pair_ids(&self) -> &[(String, String)] {
        &self.arc_pairs
    }

    pub fn region_index(&self, id: &str) -> Result<usize> {
        self.regions
            .iter()
            .position(|r| r == id)
            .ok_or_else(|| Error::UnknownRegion(id.to_string()))
    }

    pub fn arc_index(&self, id: &str) -> Result<usize> {
        self.arcs
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| Error::UnknownArc(id.to_string()))
    }

    /// `E_{i,j}`: arcs with origin `i` and destination `j` (possibly empty).
    pub fn arcs_between(&self, i: usize, j: usize) -> Vec<usize> {
        self.arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.origin == self.regions[i] && a.destination == self.regions[j])
            .map(|(k, _)| k)
            .collect()
    }

    pub fn outgoing(&self, i: usize) -> Vec<usize> {
        self.arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.origin == self.regions[i])
            .map(|(k, _)| k)
            .collect()
    }

    pub fn incoming(&self, i: usize) -> Vec<usize> {
        self.arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.destination == self.regions[i])
            .map(|(k, _)| k)
            .collect()
    }

    pub fn origin_index(&self, arc: usize) -> usize {
        self.region_index(&self.arcs[arc].origin).expect("validated")
    }

    pub fn destination_index(&self, arc: usize) -> usize {
        self.region_index(&self.arcs[arc].destination).expect("validated")
    }
}

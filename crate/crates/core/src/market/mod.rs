//! Network topology, panel data and the price transform.

mod dataset;
mod io;
mod network;
mod transform;

pub use dataset::{build_supply, IngestOptions, PanelDataset};
pub use io::{format_timestamp, ingest_csv, parse_timestamp, write_csv, DataPaths, TIMESTAMP_FORMAT};
pub use network::{Arc, MarketNetwork};
pub use transform::{inverse_log_transform, log_transform, normalize_covariate, Bounds, TransformSpec};

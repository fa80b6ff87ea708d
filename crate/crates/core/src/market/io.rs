use chrono::NaiveDateTime;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::dataset::{period_of, IngestOptions, PanelDataset};
use super::network::MarketNetwork;
use crate::error::{Error, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const ACCEPTED_FORMATS: [&str; 4] = [
    TIMESTAMP_FORMAT,
    "%Y-%m-%d %H:%M:%S",
    "%Y/%m/%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
];

/// Locations of the four variable-group files.
#[derive(Debug, Clone)]
pub struct DataPaths {
    pub prices: PathBuf,
    pub loads: PathBuf,
    pub flows: PathBuf,
    /// Optional; missing loss adjustments are taken as zero.
    pub losses: Option<PathBuf>,
}

impl DataPaths {
    /// Conventional file names inside one directory. `losses.csv` is used
    /// when present.
    pub fn in_dir(dir: &Path) -> Self {
        let losses = dir.join("losses.csv");
        DataPaths {
            prices: dir.join("prices.csv"),
            loads: dir.join("loads.csv"),
            flows: dir.join("flows.csv"),
            losses: losses.exists().then_some(losses),
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    ACCEPTED_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

struct Table {
    stamps: Vec<NaiveDateTime>,
    columns: Vec<Vec<f64>>,
}

/// Reads a timestamp-indexed table and returns columns in the order of
/// `names`, whatever their order in the file.
fn read_table(path: &Path, names: &[String]) -> Result<Table> {
    let file = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::Validation(format!("{file}: empty header")));
    }
    let mut index = Vec::with_capacity(names.len());
    for name in names {
        let k = header
            .iter()
            .skip(1)
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("{file}: missing column `{name}`")))?;
        index.push(k + 1);
    }
    let mut stamps = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw = rec.get(0).unwrap_or("");
        let t = parse_timestamp(raw)
            .ok_or_else(|| Error::Validation(format!("{file}: row {}: bad timestamp `{raw}`", row + 1)))?;
        if let Some(prev) = stamps.last() {
            if t <= *prev {
                return Err(Error::Alignment {
                    file: file.clone(),
                    stamp: raw.to_string(),
                });
            }
        }
        stamps.push(t);
        for (c, &k) in index.iter().enumerate() {
            let cell = rec.get(k).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                Error::Validation(format!("{file}: row {}: column `{}` value `{cell}`", row + 1, names[c]))
            })?;
            columns[c].push(v);
        }
    }
    period_of(&file, &stamps)?;
    Ok(Table { stamps, columns })
}

fn check_aligned(reference: &[NaiveDateTime], other: &Table, file: &Path) -> Result<()> {
    let n = reference.len().min(other.stamps.len());
    if let Some(k) = (0..n).find(|&k| reference[k] != other.stamps[k]) {
        return Err(Error::Alignment {
            file: file.display().to_string(),
            stamp: format_timestamp(&other.stamps[k]),
        });
    }
    if reference.len() != other.stamps.len() {
        let stamp = if other.stamps.len() > n {
            format_timestamp(&other.stamps[n])
        } else {
            format!("(missing after {})", format_timestamp(&reference[n - 1]))
        };
        return Err(Error::Alignment {
            file: file.display().to_string(),
            stamp,
        });
    }
    Ok(())
}

pub fn ingest_csv(paths: &DataPaths, network: &MarketNetwork, options: &IngestOptions) -> Result<PanelDataset> {
    let regions: Vec<String> = network.regions().to_vec();
    let arcs: Vec<String> = network.arcs().iter().map(|a| a.id.clone()).collect();
    let prices = read_table(&paths.prices, &regions)?;
    let loads = read_table(&paths.loads, &regions)?;
    check_aligned(&prices.stamps, &loads, &paths.loads)?;
    let flows = read_table(&paths.flows, &arcs)?;
    check_aligned(&prices.stamps, &flows, &paths.flows)?;
    let losses = match &paths.losses {
        Some(p) => {
            let l = read_table(p, &regions)?;
            check_aligned(&prices.stamps, &l, p)?;
            Some(l.columns)
        }
        None => None,
    };
    PanelDataset::new(
        network.clone(),
        prices.stamps,
        prices.columns,
        loads.columns,
        flows.columns,
        losses,
        options,
    )
}

fn write_table(path: &Path, stamps: &[NaiveDateTime], names: &[String], cols: &[Vec<f64>]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(w, "timestamp")?;
    for n in names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for (t, stamp) in stamps.iter().enumerate() {
        write!(w, "{}", format_timestamp(stamp))?;
        for c in cols {
            // Display for f64 prints the shortest string that parses back
            // to the same bits.
            write!(w, ",{}", c[t])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the raw series as `prices.csv`, `loads.csv`, `flows.csv` and
/// `losses.csv` in `dir`.
pub fn write_csv(dataset: &PanelDataset, dir: &Path) -> Result<DataPaths> {
    std::fs::create_dir_all(dir)?;
    let net = dataset.network();
    let regions: Vec<String> = net.regions().to_vec();
    let arcs: Vec<String> = net.arcs().iter().map(|a| a.id.clone()).collect();
    let paths = DataPaths {
        prices: dir.join("prices.csv"),
        loads: dir.join("loads.csv"),
        flows: dir.join("flows.csv"),
        losses: Some(dir.join("losses.csv")),
    };
    let ts = dataset.timestamps();
    write_table(&paths.prices, ts, &regions, dataset.price())?;
    write_table(&paths.loads, ts, &regions, dataset.load())?;
    write_table(&paths.flows, ts, &arcs, dataset.flow())?;
    write_table(paths.losses.as_ref().unwrap(), ts, &regions, dataset.loss_adj())?;
    Ok(paths)
}

use proptest::prelude::*;
use std::fs;

use spotgrid::market::{ingest_csv, inverse_log_transform, log_transform, write_csv, DataPaths, IngestOptions, MarketNetwork, TransformSpec};
use spotgrid::synth::{generate, GeneratorSpec};
use spotgrid::Error;

fn small_panel() -> spotgrid::market::PanelDataset {
    generate(&GeneratorSpec::nem(200, 3)).unwrap().0
}

#[test]
fn csv_round_trip_is_lossless() {
    let data = small_panel();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_csv(&data, dir.path()).unwrap();
    let back = ingest_csv(&paths, data.network(), &IngestOptions::default()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn column_order_in_files_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let net = MarketNetwork::new(
        vec!["A".into(), "B".into()],
        vec![],
        vec![],
    )
    .unwrap();
    fs::write(dir.path().join("prices.csv"), "timestamp,B,A\n2010-01-01T00:00:00,20,10\n2010-01-01T00:30:00,21,11\n").unwrap();
    fs::write(dir.path().join("loads.csv"), "timestamp,A,B\n2010-01-01T00:00:00,100,200\n2010-01-01T00:30:00,101,201\n").unwrap();
    fs::write(dir.path().join("flows.csv"), "timestamp\n2010-01-01T00:00:00\n2010-01-01T00:30:00\n").unwrap();
    let data = ingest_csv(&DataPaths::in_dir(dir.path()), &net, &IngestOptions::default()).unwrap();
    assert_eq!(data.price()[0], vec![10.0, 11.0]);
    assert_eq!(data.price()[1], vec![20.0, 21.0]);
    assert_eq!(data.supply()[1], vec![200.0, 201.0]);
    assert_eq!(data.period_minutes(), 30);
}

#[test]
fn misaligned_files_name_the_offending_stamp() {
    let data = small_panel();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_csv(&data, dir.path()).unwrap();
    let text = fs::read_to_string(&paths.loads).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.remove(10);
    fs::write(&paths.loads, lines.join("\n")).unwrap();
    match ingest_csv(&paths, data.network(), &IngestOptions::default()) {
        Err(Error::Alignment { file, .. }) => assert!(file.ends_with("loads.csv")),
        other => panic!("expected an alignment error, got {other:?}"),
    }
}

#[test]
fn both_directions_positive_is_rejected_unless_lenient() {
    let data = small_panel();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_csv(&data, dir.path()).unwrap();
    // put a small positive value in every v2 cell (v1/v2 form a pair)
    let text = fs::read_to_string(&paths.flows).unwrap();
    let mut out = String::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 {
            out.push_str(line);
        } else {
            let mut cells: Vec<String> = line.split(',').map(String::from).collect();
            let v1: f64 = cells[1].parse().unwrap();
            let v2: f64 = cells[2].parse().unwrap();
            if v1 > 0.0 && v2 == 0.0 {
                cells[2] = "0.5".into();
            }
            out.push_str(&cells.join(","));
        }
        out.push('\n');
    }
    fs::write(&paths.flows, out).unwrap();
    let strict = ingest_csv(&paths, data.network(), &IngestOptions::default());
    assert!(matches!(strict, Err(Error::Complementarity { .. })), "{strict:?}");
    let lenient = IngestOptions {
        lenient_complementarity: true,
        ..Default::default()
    };
    let fixed = ingest_csv(&paths, data.network(), &lenient).unwrap();
    for t in 0..fixed.len() {
        assert!(fixed.flow()[0][t] == 0.0 || fixed.flow()[1][t] == 0.0);
    }
}

#[test]
fn negative_flow_is_rejected() {
    let data = small_panel();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_csv(&data, dir.path()).unwrap();
    let text = fs::read_to_string(&paths.flows).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut cells: Vec<String> = lines[5].split(',').map(String::from).collect();
    cells[3] = "-1".into();
    lines[5] = cells.join(",");
    fs::write(&paths.flows, lines.join("\n")).unwrap();
    let err = ingest_csv(&paths, data.network(), &IngestOptions::default()).unwrap_err();
    assert!(matches!(err, Error::NegativeFlow { t: 4, .. }), "{err:?}");
}

#[test]
fn network_from_toml() {
    let net = MarketNetwork::from_toml_str(
        r#"
regions = ["X", "Y"]
pairs = [["xy", "yx"]]

[[arcs]]
id = "xy"
origin = "X"
destination = "Y"
nominal_capacity = 100.0
max_capacity = 90.0

[[arcs]]
id = "yx"
origin = "Y"
destination = "X"
nominal_capacity = 100.0
max_capacity = 80.0
"#,
    )
    .unwrap();
    assert_eq!(net.n_regions(), 2);
    assert_eq!(net.arcs_between(0, 1), vec![0]);
    assert_eq!(net.pairs(), &[(0, 1)]);
    assert!(MarketNetwork::from_toml_str("regions = [\"X\"]\narcs = [{ id = \"a\", origin = \"X\", destination = \"Z\", nominal_capacity = 1.0, max_capacity = 1.0 }]").is_err());
}

#[test]
fn hourly_aggregation_halves_length_and_keeps_complementarity() {
    let data = small_panel();
    let hourly = data.aggregate(2).unwrap();
    assert_eq!(hourly.len(), data.len() / 2);
    assert_eq!(hourly.periods_per_day(), 24);
    for &(f, r) in hourly.network().pairs() {
        for t in 0..hourly.len() {
            assert!(hourly.flow()[f][t] == 0.0 || hourly.flow()[r][t] == 0.0);
        }
    }
    let lp = (data.log_price()[0][0] + data.log_price()[0][1]) / 2.0;
    assert!((hourly.log_price()[0][0] - lp).abs() < 1e-12);
}

proptest! {
    #[test]
    fn log_transform_round_trip(p in -999.0f64..12_500.0) {
        let spec = TransformSpec::default();
        let x = log_transform(p, &spec).unwrap();
        prop_assert!((inverse_log_transform(x, &spec) - p).abs() <= 1e-9 * (1.0 + p.abs()));
    }

    #[test]
    fn log_transform_is_increasing(a in -999.0f64..12_500.0, b in -999.0f64..12_500.0) {
        let spec = TransformSpec::default();
        prop_assume!(a < b);
        prop_assert!(log_transform(a, &spec).unwrap() < log_transform(b, &spec).unwrap());
    }
}

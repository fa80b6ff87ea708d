use std::path::Path;
use std::process::{Command, Output};

use spotgrid::mcmc::MixtureParams;
use spotgrid::synth::{GeneratorSpec, TrueCurve};
use spotgrid_cli::{CliError, RunManifest};

const SMALL: &str = r#"
[generate]
periods = 800

[fit.sampler]
burn_in = 30
sweeps = 60

[copula]
lags = [1, 48]

[forecast]
origin = "700"
horizon = 6
draws = 50
"#;

fn spotgrid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spotgrid"))
        .arg("--config")
        .arg(dir.join("study.toml"))
        .arg("--run-dir")
        .arg(dir.join("run"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn setup(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("study.toml"), format!("{SMALL}{extra}")).unwrap();
    dir
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn forecast_run(dir: &Path, seed: &str) -> String {
    for step in [&["generate"][..], &["fit"], &["copula"], &["forecast"]] {
        let mut args = vec!["--master-seed", seed];
        args.extend_from_slice(step);
        ok(&spotgrid(dir, &args));
    }
    std::fs::read_to_string(dir.join("run/forecast/forecast.csv")).unwrap()
}

#[test]
fn missing_artifact_exits_2() {
    let dir = setup("");
    let out = spotgrid(dir.path(), &["fit"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing artifact"), "{err}");
}

#[test]
fn malformed_config_exits_2() {
    let dir = setup("\n[fit]\nsweeps = 10\n");
    let out = spotgrid(dir.path(), &["generate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed config"));
}

#[test]
fn numerical_failures_map_to_exit_3() {
    assert_eq!(CliError::Core(spotgrid::Error::Numerical("x".into())).exit_code(), 3);
    assert_eq!(CliError::Core(spotgrid::Error::Validation("x".into())).exit_code(), 2);
    assert_eq!(CliError::Config("x".into()).exit_code(), 2);
}

#[test]
fn pipeline_is_reproducible_and_seed_sensitive() {
    let a = setup("");
    let b = setup("");
    let c = setup("");
    let fa = forecast_run(a.path(), "5");
    let fb = forecast_run(b.path(), "5");
    let fc = forecast_run(c.path(), "6");
    assert_eq!(fa, fb);
    assert_ne!(fa, fc);
    assert!(fa.lines().next().unwrap().starts_with("h,timestamp,region"), "{fa}");

    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("run/manifest.json")).unwrap()).unwrap();
    for stage in ["generate", "fit", "copula", "forecast"] {
        assert!(manifest.stages.iter().any(|s| s.stage == stage), "{stage}");
    }
    assert!(manifest.outputs.keys().all(|k| !k.starts_with('/')));
    assert!(manifest.outputs.contains_key("forecast/forecast.csv"));

    let out = spotgrid(a.path(), &["event", "supply-shock", "--region", "ATLANTIS", "--mwh", "10", "--at", "10"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_from_spec_file() {
    let dir = setup("");
    let curve = TrueCurve {
        lo: 800.0,
        hi: 1200.0,
        level: 4.0,
        slope: 0.4,
        kinks: vec![],
    };
    let spec = GeneratorSpec::single_region(300, curve, MixtureParams::single(0.0, 0.05), 0);
    std::fs::write(dir.path().join("spec.json"), serde_json::to_string(&spec).unwrap()).unwrap();
    let spec_path = dir.path().join("spec.json");
    ok(&spotgrid(dir.path(), &["generate", "--spec", spec_path.to_str().unwrap()]));
    let prices = std::fs::read_to_string(dir.path().join("run/data/prices.csv")).unwrap();
    assert_eq!(prices.lines().count(), 301);
    assert_eq!(prices.lines().next().unwrap().split(',').count(), 2);
}

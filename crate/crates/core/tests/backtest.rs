use spotgrid::backtest::{run_backtest, BacktestConfig, Method};
use spotgrid::mcmc::SamplerConfig;
use spotgrid::model::{LagSpec, ModelConfig};
use spotgrid::synth::{generate, GeneratorSpec};

fn config(data: &spotgrid::market::PanelDataset, methods: Vec<Method>) -> BacktestConfig {
    BacktestConfig {
        origins: BacktestConfig::daily_origins(data, 3, 24),
        horizon: 24,
        methods,
        n_draws: 50,
        seed: 3,
        model: ModelConfig {
            sampler: SamplerConfig {
                burn_in: 50,
                sweeps: 100,
                ..Default::default()
            },
            lags: LagSpec::Fixed(vec![1, 24]),
        },
        ..Default::default()
    }
}

#[test]
fn short_backtest_fills_the_first_day() {
    let (raw, _) = generate(&GeneratorSpec::nem(1100, 6)).unwrap();
    let data = raw.aggregate(2).unwrap();
    let cfg = config(&data, Method::ALL.to_vec());
    assert_eq!(cfg.origins.len(), 3);
    assert!(cfg.origins.windows(2).all(|w| w[1] - w[0] == 24));
    let res = run_backtest(&data, &cfg).unwrap();
    assert_eq!(res.buckets.len(), 12);
    assert!(res.failures.is_empty(), "{:?}", res.failures);
    for (k, m) in res.methods.iter().enumerate() {
        // the 24 h horizon covers the first buckets only
        let filled: Vec<bool> = res.mafe[k].iter().map(|v| v.is_some()).collect();
        assert!(filled[0], "{m:?}");
        assert_eq!(res.counts[k][0], 3, "{m:?}");
        for (b, v) in res.mafe[k].iter().enumerate() {
            assert_eq!(v.is_some(), res.counts[k][b] > 0);
            if let Some(x) = v {
                assert!(x.is_finite() && *x >= 0.0);
            }
        }
    }
    let csv = res.to_csv();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("method,"));
}

#[test]
fn backtest_is_deterministic() {
    let (raw, _) = generate(&GeneratorSpec::nem(1100, 7)).unwrap();
    let data = raw.aggregate(2).unwrap();
    let cfg = config(&data, vec![Method::Naive1, Method::Copula]);
    let a = run_backtest(&data, &cfg).unwrap().to_csv();
    let b = run_backtest(&data, &cfg).unwrap().to_csv();
    assert_eq!(a, b);
}

#[test]
fn origins_too_early_are_rejected() {
    let (raw, _) = generate(&GeneratorSpec::nem(1100, 8)).unwrap();
    let data = raw.aggregate(2).unwrap();
    let mut cfg = config(&data, vec![Method::Naive1]);
    cfg.origins = vec![100];
    assert!(run_backtest(&data, &cfg).is_err());
    cfg.origins = vec![];
    assert!(run_backtest(&data, &cfg).is_err());
}

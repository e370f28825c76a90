//! Sweep harness: determinism, grid coverage, monotone degradation and CSV I/O.

use corrupt_sense::experiments::{
    preset, read_csv, run_cells, run_sweep_with, write_csv, ExperimentConfig, Method, NoiseAxis,
    Regime, Scale, SweepOptions, CSV_HEADER,
};
use corrupt_sense::linalg::Covariance;
use corrupt_sense::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OPTS: SweepOptions = SweepOptions { timing: false };

fn monotone_config(noise: NoiseAxis, method: Method) -> ExperimentConfig {
    ExperimentConfig {
        name: "monotone".into(),
        regime: Regime::LowDim,
        n: 800,
        p: None,
        ks: vec![4],
        noise,
        sigma_e: 0.0,
        sigma_x: Covariance::identity(),
        methods: vec![method],
        trials: 60,
        base_seed: 5,
        iv_ratio: 2,
        control: None,
    }
}

/// Lower 5% bootstrap quantile of each adjacent difference of level means.
fn bootstrap_adjacent_lower(levels: &[Vec<f64>], resamples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diffs = vec![Vec::with_capacity(resamples); levels.len() - 1];
    for _ in 0..resamples {
        let means: Vec<f64> = levels
            .iter()
            .map(|v| {
                (0..v.len())
                    .map(|_| v[rng.random_range(0..v.len())])
                    .sum::<f64>()
                    / v.len() as f64
            })
            .collect();
        for (i, w) in means.windows(2).enumerate() {
            diffs[i].push(w[1] - w[0]);
        }
    }
    diffs
        .into_iter()
        .map(|mut d| {
            d.sort_by(f64::total_cmp);
            d[resamples / 20]
        })
        .collect()
}

fn per_level_errors(config: &ExperimentConfig) -> Vec<Vec<f64>> {
    run_cells(config, OPTS)
        .unwrap()
        .iter()
        .map(|cell| cell.iter().filter_map(|t| t[0].l2_error).collect())
        .collect()
}

#[test]
fn error_increases_with_sigma_w_at_95_percent() {
    let config = monotone_config(
        NoiseAxis::SigmaW(vec![0.0, 0.4, 0.8, 1.2]),
        Method::KNOWN_SIGMA_W,
    );
    let levels = per_level_errors(&config);
    assert!(levels.iter().all(|l| l.len() >= 50));
    let lower = bootstrap_adjacent_lower(&levels, 2000, 1);
    assert!(lower.iter().all(|d| *d > 0.0), "{lower:?}");
}

#[test]
fn error_increases_with_rho_at_95_percent() {
    let config = monotone_config(
        NoiseAxis::Rho(vec![0.0, 0.2, 0.4, 0.6]),
        Method::MissingData,
    );
    let levels = per_level_errors(&config);
    let lower = bootstrap_adjacent_lower(&levels, 2000, 2);
    assert!(lower.iter().all(|d| *d > 0.0), "{lower:?}");
}

#[test]
fn fig1_desk_grid_and_reproducibility() {
    let config = preset("fig1", Scale::Desk).unwrap();
    assert_eq!((config.n, config.trials), (800, 50));
    let a = run_sweep_with(&config, OPTS).unwrap();
    assert_eq!(a.len(), 30);
    let b = run_sweep_with(&config, OPTS).unwrap();
    assert_eq!(a, b);
    let bits = |r: &[corrupt_sense::experiments::ResultRecord]| -> Vec<u64> {
        r.iter().map(|x| x.mean_l2_error.to_bits()).collect()
    };
    assert_eq!(bits(&a), bits(&b));

    let mut other = config.clone();
    other.base_seed += 1;
    assert_ne!(bits(&a), bits(&run_sweep_with(&other, OPTS).unwrap()));
}

#[test]
fn exact_recovery_cell() {
    let config = preset("fig1", Scale::Desk).unwrap();
    let records = run_sweep_with(&config, OPTS).unwrap();
    for r in records.iter().filter(|r| r.sigma_w == 0.0) {
        assert!(r.mean_l2_error <= 1e-8, "k = {}: {}", r.k, r.mean_l2_error);
        assert_eq!(r.control_value, 0.0);
        assert_eq!(r.failure_rate, 0.0);
    }
}

#[test]
fn failures_are_counted_not_fatal() {
    // sigma_w = 3 with n = 60 routinely makes Z^T Z - 9 I indefinite
    let mut config = monotone_config(NoiseAxis::SigmaW(vec![3.0]), Method::KNOWN_SIGMA_W);
    config.n = 60;
    config.trials = 40;
    let records = run_sweep_with(&config, OPTS).unwrap();
    let r = &records[0];
    assert!(r.failure_rate > 0.0, "expected some failures");
    assert!(r.failure_rate <= 1.0);
    assert_eq!(r.trials, 40);
}

#[test]
fn csv_round_trip_of_a_real_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig5.csv");
    let records = run_sweep_with(
        &preset("fig5", Scale::Desk).unwrap(),
        SweepOptions { timing: true },
    )
    .unwrap();
    write_csv(&records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert!(!text.contains('\r'));
    assert_eq!(read_csv(&path).unwrap(), records);
}

#[test]
fn reading_a_foreign_header_fails_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b\n1,2\n").unwrap();
    match read_csv(&path) {
        Err(Error::Format { path: p, .. }) => assert_eq!(p, path),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_preset() {
    assert!(matches!(preset("fig6", Scale::Desk), Err(Error::UnknownPreset(n)) if n == "fig6"));
}

#[test]
fn config_from_json() {
    let text = r#"{
        "name": "custom",
        "regime": "high_dim",
        "n": 100,
        "p": 120,
        "ks": [2, 3],
        "noise": {"sigma_w": [0.0, 0.5]},
        "sigma_x": {"type": "equicorrelated", "value": 0.2},
        "methods": ["sigma_w", "sigma_w_upper_x1.5", "naive", "clean"],
        "trials": 3
    }"#;
    let config: ExperimentConfig = serde_json::from_str(text).unwrap();
    config.validate().unwrap();
    let records = run_sweep_with(&config, OPTS).unwrap();
    assert_eq!(records.len(), 2 * 2 * 4);
    assert!(records
        .iter()
        .all(|r| r.p == 120 && r.regime == Regime::HighDim));
}

#[test]
fn missing_alt_control_override() {
    let text = r#"{"name": "m", "regime": "low_dim", "n": 200, "ks": [4], "noise": {"rho": [0.25]},
        "methods": ["missing"], "trials": 2, "control": "missing_alt"}"#;
    let config: ExperimentConfig = serde_json::from_str(text).unwrap();
    let r = &run_sweep_with(&config, OPTS).unwrap()[0];
    assert!((r.control_value - 0.25 * 2.0).abs() < 1e-15);
}

#[test]
fn readme_config_example_parses() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md")).unwrap();
    let start = readme.find("```json\n").unwrap() + "```json\n".len();
    let end = start + readme[start..].find("```").unwrap();
    let config: ExperimentConfig = serde_json::from_str(&readme[start..end]).unwrap();
    config.validate().unwrap();
    assert_eq!(config.methods.len(), 5);
}

//! Monte-Carlo properties of the corrected estimators.

use corrupt_sense::estimators::{error_bound, BoundParams, EstimatorKind};
use corrupt_sense::experiments::{
    run_sweep_with, run_trial, ExperimentConfig, Method, NoiseAxis, Regime, ResultRecord,
    SweepOptions,
};
use corrupt_sense::linalg::Covariance;

const OPTS: SweepOptions = SweepOptions { timing: false };

fn low_dim(
    n: usize,
    k: usize,
    sigma_w: Vec<f64>,
    methods: Vec<Method>,
    trials: usize,
) -> ExperimentConfig {
    ExperimentConfig {
        name: "test".into(),
        regime: Regime::LowDim,
        n,
        p: None,
        ks: vec![k],
        noise: NoiseAxis::SigmaW(sigma_w),
        sigma_e: 0.0,
        sigma_x: Covariance::identity(),
        methods,
        trials,
        base_seed: 99,
        iv_ratio: 2,
        control: None,
    }
}

fn mean_of(records: &[ResultRecord], sigma_w: f64, estimator: &str) -> f64 {
    records
        .iter()
        .find(|r| r.sigma_w == sigma_w && r.estimator == estimator)
        .unwrap()
        .mean_l2_error
}

#[test]
fn upper_bound_is_worse_but_within_its_bound() {
    let (n, k) = (800, 5);
    let config = low_dim(
        n,
        k,
        vec![0.5],
        vec![
            Method::KNOWN_SIGMA_W,
            Method::UpperBoundSigmaW { factor: 2.0 },
        ],
        50,
    );
    let records = run_sweep_with(&config, OPTS).unwrap();
    let exact = mean_of(&records, 0.5, "sigma_w");
    let upper = mean_of(&records, 0.5, "sigma_w_upper_x2");
    assert!(upper > exact, "upper {upper} vs exact {exact}");

    let bound = error_bound(
        EstimatorKind::UpperBoundSigmaW,
        &BoundParams {
            sigma_w: 0.5,
            sigma_e: 0.0,
            k,
            n,
            p: k,
            beta_norm: (k as f64).sqrt(),
            lambda_min_sigma_x: 1.0,
            upper_gap: Some(0.25),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(bound.is_finite());
    assert!(
        upper <= bound,
        "upper-bound error {upper} exceeds bound {bound}"
    );
}

#[test]
fn sigma_x_grows_linearly_sigma_w_quadratically() {
    let config = low_dim(
        3200,
        3,
        vec![1.0, 2.0],
        vec![Method::KNOWN_SIGMA_W, Method::KnownSigmaX],
        60,
    );
    let records = run_sweep_with(&config, OPTS).unwrap();
    let ratio_w = mean_of(&records, 2.0, "sigma_w") / mean_of(&records, 1.0, "sigma_w");
    let ratio_x = mean_of(&records, 2.0, "sigma_x") / mean_of(&records, 1.0, "sigma_x");
    // control parameters predict 3 and 1.5
    assert!(ratio_w > 2.2, "sigma_w ratio {ratio_w}");
    assert!(ratio_x < 2.0, "sigma_x ratio {ratio_x}");
    assert!(ratio_x > 1.0, "sigma_x ratio {ratio_x}");
}

#[test]
fn naive_is_biased_towards_zero_under_additive_noise() {
    let config = low_dim(
        800,
        4,
        vec![1.0],
        vec![Method::KNOWN_SIGMA_W, Method::Naive],
        40,
    );
    let mut naive_worse = 0;
    for t in 0..config.trials {
        let out = run_trial(&config, 4, 0, t, OPTS).unwrap();
        if out[1].l2_error.unwrap() > out[0].l2_error.unwrap() {
            naive_worse += 1;
        }
    }
    assert!(naive_worse >= 36, "naive worse in only {naive_worse}/40");
}

#[test]
fn missing_correction_beats_naive_under_correlated_design() {
    let config = ExperimentConfig {
        noise: NoiseAxis::Rho(vec![0.4]),
        sigma_x: Covariance::Equicorrelated(0.5),
        methods: vec![Method::MissingData, Method::Naive],
        ..low_dim(1000, 6, vec![], vec![], 40)
    };
    let mut naive_worse = 0;
    for t in 0..config.trials {
        let out = run_trial(&config, 6, 0, t, OPTS).unwrap();
        if out[1].l2_error.unwrap() > out[0].l2_error.unwrap() {
            naive_worse += 1;
        }
    }
    assert!(naive_worse >= 32, "naive worse in only {naive_worse}/40");
}

#[test]
fn clean_baseline_matches_missing_estimator_without_erasures() {
    let config = ExperimentConfig {
        noise: NoiseAxis::Rho(vec![0.0]),
        sigma_e: 0.3,
        methods: vec![Method::MissingData, Method::Clean, Method::Naive],
        ..low_dim(300, 4, vec![], vec![], 10)
    };
    for t in 0..config.trials {
        let out = run_trial(&config, 4, 0, t, OPTS).unwrap();
        let e: Vec<f64> = out.iter().map(|o| o.l2_error.unwrap()).collect();
        assert!(
            (e[0] - e[1]).abs() < 1e-12 && (e[1] - e[2]).abs() < 1e-12,
            "{e:?}"
        );
    }
}

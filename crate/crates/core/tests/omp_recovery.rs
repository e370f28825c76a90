//! Support recovery of mod-OMP in the high-dimensional regimes.

use corrupt_sense::datagen::{gen_instance, CorruptionSpec, DesignSpec};
use corrupt_sense::linalg::Covariance;
use corrupt_sense::metrics::support_report;
use corrupt_sense::omp::{mod_omp, naive_omp, FinalEstimatorChoice};

fn recovery_rate(
    n: usize,
    p: usize,
    k: usize,
    design: &DesignSpec,
    corruption: &CorruptionSpec,
    choice: &FinalEstimatorChoice,
    trials: u64,
) -> f64 {
    let mut hits = 0;
    for t in 0..trials {
        let inst = gen_instance(n, p, k, design, corruption, 500 + t).unwrap();
        let fit = mod_omp(&inst.z, &inst.y, k, choice).unwrap();
        assert_eq!(fit.support.len(), k);
        if support_report(&fit.support, &inst.support()).exact_match {
            hits += 1;
        }
    }
    hits as f64 / trials as f64
}

#[test]
fn additive_noise_recovery() {
    let rate = recovery_rate(
        400,
        450,
        4,
        &DesignSpec::isotropic(0.0),
        &CorruptionSpec::additive(0.5),
        &FinalEstimatorChoice::KnownSigmaW(Covariance::Isotropic(0.25)),
        30,
    );
    assert!(rate >= 0.9, "rate {rate}");
}

#[test]
fn missing_data_recovery() {
    let rate = recovery_rate(
        500,
        750,
        4,
        &DesignSpec::isotropic(0.0),
        &CorruptionSpec::missing(0.2),
        &FinalEstimatorChoice::MissingData(0.2),
        30,
    );
    assert!(rate >= 0.9, "rate {rate}");
}

#[test]
fn correlated_design_recovery() {
    let design = DesignSpec {
        sigma_x: Covariance::Equicorrelated(0.2),
        sigma_e: 0.1,
    };
    let rate = recovery_rate(
        500,
        750,
        4,
        &design,
        &CorruptionSpec::missing(0.1),
        &FinalEstimatorChoice::MissingData(0.1),
        30,
    );
    assert!(rate >= 0.9, "rate {rate}");
}

#[test]
fn corrected_estimate_beats_naive_on_same_support() {
    let mut better = 0;
    for t in 0..20 {
        let inst = gen_instance(
            400,
            450,
            5,
            &DesignSpec::isotropic(0.0),
            &CorruptionSpec::additive(1.0),
            900 + t,
        )
        .unwrap();
        let corrected = mod_omp(
            &inst.z,
            &inst.y,
            5,
            &FinalEstimatorChoice::KnownSigmaW(Covariance::Isotropic(1.0)),
        )
        .unwrap();
        let naive = naive_omp(&inst.z, &inst.y, 5).unwrap();
        assert_eq!(corrected.support, naive.support);
        if (&naive.beta_hat - &inst.beta_star).norm()
            > (&corrected.beta_hat - &inst.beta_star).norm()
        {
            better += 1;
        }
    }
    assert!(better >= 16, "corrected better in {better}/20");
}

//! Monte-Carlo probes of how fast Gaussian cross-moment deviations shrink
//! with the sample count `n`.
//!
//! Each probe draws `trials` independent matrices per grid point, records
//! the median of a deviation statistic, and fits the slope of
//! `log(median)` against `log(n)`. The expected slope is `-1/2` (up to log
//! factors).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_design, DesignSpec};
use crate::error::{invalid, Result};
use crate::linalg::{self, Covariance};
use crate::metrics::median;
use crate::par;
use crate::rng::{derive_seed, derive_seed_path};

pub const MIN_TRIALS: usize = 30;
pub const MIN_SAMPLES: usize = 10;
pub const DEFAULT_N_VALUES: [usize; 4] = [400, 800, 1600, 3200];
pub const DEFAULT_TRIALS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub statistic_name: String,
    pub n_values: Vec<usize>,
    pub medians: Vec<f64>,
    pub trials_per_point: usize,
    /// Slope of `log(median)` vs `log(n)`; `None` when a median is zero.
    pub scaling_exponent: Option<f64>,
    /// Operator probe only: sample count at which the fitted median reaches
    /// `1/54` (the deviation level required for `lambda = 1`).
    pub required_n: Option<f64>,
}

/// Whether the two matrices in the bilinear probe are independent draws or
/// the same draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    Independent,
    Shared,
}

fn validate_grid(n_values: &[usize], trials: usize) -> Result<()> {
    if n_values.is_empty() {
        return Err(invalid("empty sample-count grid"));
    }
    if let Some(n) = n_values.iter().find(|n| **n < MIN_SAMPLES) {
        return Err(invalid(format!(
            "sample count {n} below minimum {MIN_SAMPLES}"
        )));
    }
    if trials < MIN_TRIALS {
        return Err(invalid(format!(
            "{trials} trials per point, need at least {MIN_TRIALS}"
        )));
    }
    Ok(())
}

fn trial_seed(seed: u64, grid_index: usize, trial: usize) -> u64 {
    derive_seed_path(seed, "probe", &[grid_index as u64, trial as u64])
}

/// The first matrix of a trial.
pub fn trial_matrix_y(
    n: usize,
    p: usize,
    sigma: &Covariance,
    trial_seed: u64,
) -> Result<DMatrix<f64>> {
    let spec = DesignSpec {
        sigma_x: sigma.clone(),
        sigma_e: 0.0,
    };
    gen_design(n, p, &spec, derive_seed(trial_seed, "probe-y", 0))
}

/// The second, independent matrix of a trial.
pub fn trial_matrix_x(n: usize, k: usize, trial_seed: u64) -> Result<DMatrix<f64>> {
    gen_design(
        n,
        k,
        &DesignSpec::isotropic(0.0),
        derive_seed(trial_seed, "probe-x", 0),
    )
}

/// `||Y^T Y - Sigma||_inf` (largest entry in absolute value).
pub fn max_deviation_statistic(y: &DMatrix<f64>, sigma: &DMatrix<f64>) -> f64 {
    linalg::max_abs(&(y.tr_mul(y) - sigma))
}

/// `|v1^T (Y^T X - mean) v2|`.
pub fn bilinear_statistic(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    mean: &DMatrix<f64>,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
) -> f64 {
    let dev = y.tr_mul(x) - mean;
    v1.dot(&(dev * v2)).abs()
}

/// `||X^T v||_2`.
pub fn column_projection_statistic(x: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    x.tr_mul(v).norm()
}

fn run_probe<F>(
    name: &str,
    n_values: &[usize],
    trials: usize,
    seed: u64,
    stat: F,
) -> Result<ProbeReport>
where
    F: Fn(usize, u64) -> Result<f64> + Sync + Send,
{
    validate_grid(n_values, trials)?;
    let mut medians = Vec::with_capacity(n_values.len());
    for (gi, &n) in n_values.iter().enumerate() {
        let values = par::map_indexed(trials, |t| stat(n, trial_seed(seed, gi, t)));
        let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
        medians.push(median(&values));
    }
    Ok(ProbeReport {
        statistic_name: name.to_string(),
        n_values: n_values.to_vec(),
        scaling_exponent: loglog_slope(n_values, &medians).map(|(s, _)| s),
        medians,
        trials_per_point: trials,
        required_n: None,
    })
}

/// Least-squares `(slope, intercept)` of `log(median)` on `log(n)`.
pub fn loglog_slope(n_values: &[usize], medians: &[f64]) -> Option<(f64, f64)> {
    if n_values.len() < 2 || medians.iter().any(|m| m.is_nan() || *m <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = n_values.iter().map(|n| (*n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Entrywise deviation of the sample second-moment matrix.
pub fn probe_max_deviation(
    p: usize,
    sigma: &Covariance,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if p == 0 {
        return Err(invalid("p must be >= 1"));
    }
    sigma.validate(p, true)?;
    let dense = sigma.to_dense(p);
    run_probe("max_deviation", n_values, trials, seed, |n, s| {
        let y = trial_matrix_y(n, p, sigma, s)?;
        Ok(max_deviation_statistic(&y, &dense))
    })
}

fn unit_or_zero(v: &DVector<f64>, what: &str) -> Result<()> {
    let norm = v.norm();
    if norm == 0.0 || (norm - 1.0).abs() <= 1e-9 {
        Ok(())
    } else {
        Err(invalid(format!(
            "{what} must be a unit vector (or zero), has norm {norm}"
        )))
    }
}

/// Deviation of a fixed bilinear form of the cross moment `Y^T X`, where
/// `Y` is `n x p` and `X` is `n x k`.
#[allow(clippy::too_many_arguments)]
pub fn probe_bilinear(
    p: usize,
    k: usize,
    n_values: &[usize],
    trials: usize,
    seed: u64,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
    coupling: Coupling,
) -> Result<ProbeReport> {
    if p == 0 || k == 0 {
        return Err(invalid("p and k must be >= 1"));
    }
    if v1.len() != p || v2.len() != k {
        return Err(invalid("v1 must have length p and v2 length k"));
    }
    unit_or_zero(v1, "v1")?;
    unit_or_zero(v2, "v2")?;
    let mean = match coupling {
        Coupling::Independent => DMatrix::zeros(p, k),
        Coupling::Shared if p == k => DMatrix::identity(p, p),
        Coupling::Shared => return Err(invalid("shared coupling needs p == k")),
    };
    let sigma = Covariance::identity();
    run_probe("bilinear", n_values, trials, seed, |n, s| {
        let y = trial_matrix_y(n, p, &sigma, s)?;
        let x = match coupling {
            Coupling::Independent => trial_matrix_x(n, k, s)?,
            Coupling::Shared => y.clone(),
        };
        Ok(bilinear_statistic(&y, &x, &mean, v1, v2))
    })
}

/// Operator norm of `Y^T X` for independent `n x m` and `n x k` matrices.
pub fn probe_operator(
    k: usize,
    m: usize,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if k == 0 || m == 0 {
        return Err(invalid("k and m must be >= 1"));
    }
    let sigma = Covariance::identity();
    let mut report = run_probe("operator", n_values, trials, seed, |n, s| {
        let y = trial_matrix_y(n, m, &sigma, s)?;
        let x = trial_matrix_x(n, k, s)?;
        Ok(linalg::operator_norm(&y.tr_mul(&x)))
    })?;
    let target: f64 = 1.0 / 54.0;
    report.required_n = loglog_slope(&report.n_values, &report.medians)
        .filter(|(slope, _)| *slope < 0.0)
        .map(|(slope, intercept)| ((target.ln() - intercept) / slope).exp());
    Ok(report)
}

/// `||X^T v||_2` for a fixed unit `v` in `R^n` (the normalized all-ones
/// vector) and `n x k` isotropic `X`.
pub fn probe_column_projection(
    k: usize,
    n_values: &[usize],
    trials: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    run_probe("column_projection", n_values, trials, seed, |n, s| {
        let x = trial_matrix_x(n, k, s)?;
        let v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        Ok(column_projection_statistic(&x, &v))
    })
}

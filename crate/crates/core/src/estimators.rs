//! Corrected moment pairs `(Sigma_hat, gamma_hat)` and the corrected
//! least-squares solve `Sigma_hat beta = gamma_hat`.
//!
//! Each builder replaces the unavailable `(X^T X, X^T y)` with an estimate
//! formed from the observed `Z` and one piece of side knowledge:
//!
//! | kind                  | `Sigma_hat`              | `gamma_hat`            |
//! |-----------------------|--------------------------|------------------------|
//! | known `Sigma_w`       | `Z^T Z - Sigma_w`        | `Z^T y`                |
//! | known `Sigma_x`       | `Sigma_x`                | `Z^T y`                |
//! | instruments `U`       | `Z^T U U^T Z`            | `Z^T U U^T y`          |
//! | erasure rate `rho`    | `(Z^T Z) .* M`           | `Z^T y / (1 - rho)`    |
//!
//! Builders never reject an indefinite `Sigma_hat`; the strong convexity
//! check happens in [`solve_corrected`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::IVSpec;
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    KnownSigmaW,
    UpperBoundSigmaW,
    KnownSigmaX,
    InstrumentalVariable,
    MissingData,
    CleanLS,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::KnownSigmaW => "sigma_w",
            EstimatorKind::UpperBoundSigmaW => "sigma_w_upper",
            EstimatorKind::KnownSigmaX => "sigma_x",
            EstimatorKind::InstrumentalVariable => "iv",
            EstimatorKind::MissingData => "missing",
            EstimatorKind::CleanLS => "clean_ls",
        }
    }
}

#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub sigma_hat: DMatrix<f64>,
    pub gamma_hat: DVector<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kind: EstimatorKind,
}

impl MomentEstimate {
    fn new(mut sigma_hat: DMatrix<f64>, gamma_hat: DVector<f64>, kind: EstimatorKind) -> Self {
        linalg::symmetrize(&mut sigma_hat);
        let (lambda_min, lambda_max) = linalg::eigen_extremes(&sigma_hat);
        Self {
            sigma_hat,
            gamma_hat,
            lambda_min,
            lambda_max,
            kind,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma_hat.len()
    }

    /// `lambda_max / lambda_min`; infinite when `Sigma_hat` is not definite.
    pub fn condition_number(&self) -> f64 {
        if self.lambda_min > 0.0 {
            self.lambda_max / self.lambda_min
        } else {
            f64::INFINITY
        }
    }

    /// The relative floor `1e-8 * |trace| / d`.
    pub fn default_lambda_floor(&self) -> f64 {
        let d = self.dim().max(1) as f64;
        1e-8 * (self.sigma_hat.trace().abs() / d).max(f64::MIN_POSITIVE)
    }
}

/// `M_ij = 1/(1-rho)` on the diagonal and `1/(1-rho)^2` off it.
#[derive(Debug, Clone)]
pub struct CorrectionMask {
    pub m: DMatrix<f64>,
}

impl CorrectionMask {
    pub fn new(d: usize, rho: f64) -> Result<Self> {
        check_rho(rho)?;
        let q = 1.0 / (1.0 - rho);
        let m = DMatrix::from_fn(d, d, |i, j| if i == j { q } else { q * q });
        Ok(Self { m })
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho) {
        Ok(())
    } else {
        Err(invalid(format!(
            "erasure probability must lie in [0, 1), got {rho}"
        )))
    }
}

fn check_zy(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    check_dim("response length", z.nrows(), y.len())
}

fn check_square(what: &'static str, m: &DMatrix<f64>, d: usize) -> Result<()> {
    check_dim(what, d, m.nrows())?;
    check_dim(what, d, m.ncols())
}

fn gram(z: &DMatrix<f64>) -> DMatrix<f64> {
    z.tr_mul(z)
}

pub fn build_known_sigma_w(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma_w: &DMatrix<f64>,
) -> Result<MomentEstimate> {
    check_zy(z, y)?;
    check_square("Sigma_w", sigma_w, z.ncols())?;
    Ok(MomentEstimate::new(
        gram(z) - sigma_w,
        z.tr_mul(y),
        EstimatorKind::KnownSigmaW,
    ))
}

/// Same formula as [`build_known_sigma_w`] with a conservative `Sigma_w_upper`.
pub fn build_upper_bound_sigma_w(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma_w_upper: &DMatrix<f64>,
) -> Result<MomentEstimate> {
    let mut est = build_known_sigma_w(z, y, sigma_w_upper)?;
    est.kind = EstimatorKind::UpperBoundSigmaW;
    Ok(est)
}

pub fn build_known_sigma_x(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma_x: &DMatrix<f64>,
) -> Result<MomentEstimate> {
    check_zy(z, y)?;
    check_square("Sigma_x", sigma_x, z.ncols())?;
    Ok(MomentEstimate::new(
        sigma_x.clone(),
        z.tr_mul(y),
        EstimatorKind::KnownSigmaX,
    ))
}

pub fn build_iv(z: &DMatrix<f64>, y: &DVector<f64>, iv: &IVSpec) -> Result<MomentEstimate> {
    check_zy(z, y)?;
    check_dim("instrument rows", z.nrows(), iv.u.nrows())?;
    let d = z.ncols();
    if iv.u.ncols() < d {
        return Err(invalid(format!(
            "{} instruments cannot identify {d} coefficients",
            iv.u.ncols()
        )));
    }
    let utz = iv.u.tr_mul(z);
    let uty = iv.u.tr_mul(y);
    Ok(MomentEstimate::new(
        utz.tr_mul(&utz),
        utz.tr_mul(&uty),
        EstimatorKind::InstrumentalVariable,
    ))
}

pub fn build_missing(z: &DMatrix<f64>, y: &DVector<f64>, rho: f64) -> Result<MomentEstimate> {
    check_zy(z, y)?;
    let mask = CorrectionMask::new(z.ncols(), rho)?;
    Ok(MomentEstimate::new(
        gram(z).component_mul(&mask.m),
        z.tr_mul(y) / (1.0 - rho),
        EstimatorKind::MissingData,
    ))
}

/// Ordinary least-squares moments `(Z^T Z, Z^T y)`.
pub fn build_clean(z: &DMatrix<f64>, y: &DVector<f64>) -> Result<MomentEstimate> {
    check_zy(z, y)?;
    Ok(MomentEstimate::new(
        gram(z),
        z.tr_mul(y),
        EstimatorKind::CleanLS,
    ))
}

/// How [`solve_corrected_with`] treats an estimate that fails the strong
/// convexity check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdRepair {
    /// Return `StrongConvexityViolation`.
    #[default]
    Fail,
    /// Raise eigenvalues below the floor to the floor and solve.
    ClipEigenvalues,
}

/// Solve `Sigma_hat beta = gamma_hat`, requiring `lambda_min > lambda_floor`.
pub fn solve_corrected(est: &MomentEstimate, lambda_floor: f64) -> Result<DVector<f64>> {
    solve_corrected_with(est, lambda_floor, PsdRepair::Fail)
}

pub fn solve_corrected_with(
    est: &MomentEstimate,
    lambda_floor: f64,
    repair: PsdRepair,
) -> Result<DVector<f64>> {
    if lambda_floor.is_nan() || lambda_floor <= 0.0 {
        return Err(invalid("lambda_floor must be positive"));
    }
    let violation = Error::StrongConvexityViolation {
        lambda_min: est.lambda_min,
        floor: lambda_floor,
    };
    if est.dim() == 0 {
        return Ok(DVector::zeros(0));
    }
    if est.lambda_min.is_nan() || est.lambda_min <= lambda_floor {
        return match repair {
            PsdRepair::Fail => Err(violation),
            PsdRepair::ClipEigenvalues => Ok(linalg::solve_eigen_clipped(
                &est.sigma_hat,
                &est.gamma_hat,
                lambda_floor,
            )),
        };
    }
    linalg::solve_symmetric(&est.sigma_hat, &est.gamma_hat).ok_or(violation)
}

/// Solve with the default relative floor.
pub fn solve_default(est: &MomentEstimate) -> Result<DVector<f64>> {
    solve_corrected(est, est.default_lambda_floor())
}

/// Instrument diagnostics needed by the IV bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvBoundParams {
    pub sigma_1: f64,
    pub sigma_k: f64,
    pub sigma_u: f64,
    pub m: usize,
}

/// Inputs to [`error_bound`]. Fields not used by a kind are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundParams {
    pub sigma_w: f64,
    pub sigma_e: f64,
    pub rho: f64,
    pub k: usize,
    pub n: usize,
    pub p: usize,
    pub beta_norm: f64,
    pub lambda_min_sigma_x: f64,
    /// `lambda_max(Sigma_w_upper - Sigma_w)`, upper-bound kind only.
    pub upper_gap: Option<f64>,
    pub iv: Option<IvBoundParams>,
}

/// Evaluate the high-probability error bound of each estimator with the
/// universal constant set to 1. Only proportionality is meaningful.
///
/// Returns `f64::INFINITY` for the upper-bound kind when
/// `lambda_min(Sigma_x) <= lambda_max(Sigma_w_upper - Sigma_w)`.
pub fn error_bound(kind: EstimatorKind, b: &BoundParams) -> Result<f64> {
    if b.n == 0 {
        return Err(Error::MissingParameter("n"));
    }
    let rate = ((b.k as f64) * (b.p.max(1) as f64).ln() / b.n as f64).sqrt();
    let need_lambda = || {
        if b.lambda_min_sigma_x > 0.0 {
            Ok(b.lambda_min_sigma_x)
        } else {
            Err(Error::MissingParameter("lambda_min_sigma_x"))
        }
    };
    let sw = b.sigma_w;
    let noise_term = b.sigma_e * (1.0 + sw * sw).sqrt();
    let value = match kind {
        EstimatorKind::KnownSigmaW => {
            ((sw + sw * sw) * b.beta_norm + noise_term) / need_lambda()? * rate
        }
        EstimatorKind::UpperBoundSigmaW => {
            let gap = b.upper_gap.ok_or(Error::MissingParameter("upper_gap"))?;
            let denom = need_lambda()? - gap;
            if denom <= 0.0 {
                f64::INFINITY
            } else {
                (((sw + sw * sw) * b.beta_norm + noise_term) * rate + gap * b.beta_norm) / denom
            }
        }
        EstimatorKind::KnownSigmaX => {
            ((1.0 + sw) * b.beta_norm + noise_term) / need_lambda()? * rate
        }
        EstimatorKind::InstrumentalVariable => {
            let iv = b.iv.ok_or(Error::MissingParameter("iv"))?;
            if iv.sigma_k <= 0.0 || iv.m == 0 || b.k == 0 {
                return Err(invalid("IV bound needs sigma_k > 0, m >= 1 and k >= 1"));
            }
            let strength = iv.sigma_1 * iv.sigma_u
                / (iv.sigma_k * iv.sigma_k * (b.k as f64 / iv.m as f64).sqrt());
            (sw * sw * b.beta_norm * b.beta_norm + b.sigma_e * b.sigma_e).sqrt() * strength * rate
        }
        EstimatorKind::MissingData => {
            check_rho(b.rho)?;
            let q = 1.0 / (1.0 - b.rho);
            (q * q * b.beta_norm + q * b.sigma_e) / need_lambda()? * rate
        }
        EstimatorKind::CleanLS => b.sigma_e / need_lambda()? * rate,
    };
    Ok(value)
}

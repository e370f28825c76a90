//! Gaussian designs, the two corruption channels, and full problem instances.
//!
//! All user-facing covariances are unscaled: rows of `X` are drawn with
//! covariance `Sigma_x / n`, rows of `W` with `Sigma_w / n` and entries of
//! `e` with variance `sigma_e^2 / n`, so that `E[X^T X] = Sigma_x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Result};
use crate::linalg::{self, Covariance};
use crate::rng::{derive_seed, stream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub sigma_x: Covariance,
    pub sigma_e: f64,
}

impl DesignSpec {
    pub fn isotropic(sigma_e: f64) -> Self {
        Self {
            sigma_x: Covariance::identity(),
            sigma_e,
        }
    }
}

/// How the true covariates are corrupted before being observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum CorruptionSpec {
    Clean,
    /// `Z = X + W`. Without an explicit matrix the noise covariance is
    /// `sigma_w^2 I`.
    AdditiveNoise {
        sigma_w: f64,
        #[serde(default)]
        sigma_w_matrix: Option<DMatrix<f64>>,
        /// Conservative `Sigma_w_upper >= Sigma_w` for the upper-bound estimator.
        #[serde(default)]
        sigma_w_upper: Option<DMatrix<f64>>,
    },
    /// Each entry is observed independently with probability `1 - rho`.
    Missing {
        rho: f64,
    },
}

impl CorruptionSpec {
    pub fn additive(sigma_w: f64) -> Self {
        CorruptionSpec::AdditiveNoise {
            sigma_w,
            sigma_w_matrix: None,
            sigma_w_upper: None,
        }
    }

    pub fn missing(rho: f64) -> Self {
        CorruptionSpec::Missing { rho }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match self {
            CorruptionSpec::Clean => Ok(()),
            CorruptionSpec::AdditiveNoise {
                sigma_w,
                sigma_w_matrix,
                sigma_w_upper,
            } => {
                if !(sigma_w.is_finite() && *sigma_w >= 0.0) {
                    return Err(invalid(format!("sigma_w must be >= 0, got {sigma_w}")));
                }
                if let Some(m) = sigma_w_matrix {
                    Covariance::Dense(m.clone()).validate(p, false)?;
                }
                if let Some(m) = sigma_w_upper {
                    check_dim("Sigma_w_upper", p, m.nrows())?;
                    check_dim("Sigma_w_upper", p, m.ncols())?;
                    if !linalg::is_symmetric(m, 1e-10) {
                        return Err(invalid("Sigma_w_upper must be symmetric"));
                    }
                }
                Ok(())
            }
            CorruptionSpec::Missing { rho } => {
                if (0.0..1.0).contains(rho) {
                    Ok(())
                } else {
                    Err(invalid(format!("rho must lie in [0, 1), got {rho}")))
                }
            }
        }
    }

    /// Noise covariance `Sigma_w` (zero for the other channels).
    pub fn noise_covariance(&self) -> Covariance {
        match self {
            CorruptionSpec::AdditiveNoise {
                sigma_w_matrix: Some(m),
                ..
            } => Covariance::Dense(m.clone()),
            CorruptionSpec::AdditiveNoise { sigma_w, .. } => {
                Covariance::Isotropic(sigma_w * sigma_w)
            }
            _ => Covariance::Isotropic(0.0),
        }
    }

    pub fn rho(&self) -> f64 {
        match self {
            CorruptionSpec::Missing { rho } => *rho,
            _ => 0.0,
        }
    }

    pub fn sigma_w(&self) -> f64 {
        match self {
            CorruptionSpec::AdditiveNoise { sigma_w, .. } => *sigma_w,
            _ => 0.0,
        }
    }
}

/// The realized corruption: the noise matrix or the observation mask.
#[derive(Debug, Clone, PartialEq)]
pub enum Corruption {
    Clean,
    Noise(DMatrix<f64>),
    /// `true` = observed.
    Mask(DMatrix<bool>),
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub corruption_realized: Corruption,
    pub e: DVector<f64>,
    pub beta_star: DVector<f64>,
    pub y: DVector<f64>,
    pub corruption: CorruptionSpec,
    pub seed: u64,
}

impl ProblemInstance {
    pub fn w(&self) -> Option<&DMatrix<f64>> {
        match &self.corruption_realized {
            Corruption::Noise(w) => Some(w),
            _ => None,
        }
    }

    pub fn mask(&self) -> Option<&DMatrix<bool>> {
        match &self.corruption_realized {
            Corruption::Mask(m) => Some(m),
            _ => None,
        }
    }

    /// Indices of the nonzero entries of `beta_star`, ascending.
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.beta_star)
    }
}

pub fn support_of(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn gaussian_rows(rng: &mut StreamRng, n: usize, p: usize, scale: f64) -> DMatrix<f64> {
    let data: Vec<f64> = (0..n * p)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DMatrix::from_row_slice(n, p, &data)
}

/// Draw `n` rows with covariance `cov / n`. `cov` must already be validated.
fn sample_rows(rng: &mut StreamRng, n: usize, p: usize, cov: &Covariance) -> DMatrix<f64> {
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    match cov {
        Covariance::Isotropic(v) => gaussian_rows(rng, n, p, v.sqrt() * inv_sqrt_n),
        Covariance::Equicorrelated(c) => {
            // x = sqrt(1-c) g + sqrt(c) g0 * 1
            let a = (1.0 - c).sqrt() * inv_sqrt_n;
            let b = c.sqrt() * inv_sqrt_n;
            let mut out = DMatrix::zeros(n, p);
            for i in 0..n {
                let shared: f64 = rng.sample(StandardNormal);
                for j in 0..p {
                    let g: f64 = rng.sample(StandardNormal);
                    out[(i, j)] = a * g + b * shared;
                }
            }
            out
        }
        Covariance::Dense(m) => {
            let f = linalg::psd_sqrt(m);
            gaussian_rows(rng, n, p, inv_sqrt_n) * f.transpose()
        }
    }
}

/// Sub-Gaussian (Gaussian) design with row covariance `Sigma_x / n`.
pub fn gen_design(n: usize, p: usize, spec: &DesignSpec, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || p == 0 {
        return Err(invalid("design needs n >= 1 and p >= 1"));
    }
    spec.sigma_x.validate(p, true)?;
    if !(spec.sigma_e.is_finite() && spec.sigma_e >= 0.0) {
        return Err(invalid("sigma_e must be >= 0"));
    }
    let mut rng = stream(seed);
    Ok(sample_rows(&mut rng, n, p, &spec.sigma_x))
}

/// Apply the corruption channel to `x`.
pub fn corrupt(
    x: &DMatrix<f64>,
    spec: &CorruptionSpec,
    seed: u64,
) -> Result<(DMatrix<f64>, Corruption)> {
    let (n, p) = x.shape();
    spec.validate(p)?;
    let mut rng = stream(seed);
    match spec {
        CorruptionSpec::Clean => Ok((x.clone(), Corruption::Clean)),
        CorruptionSpec::AdditiveNoise { .. } => {
            let w = sample_rows(&mut rng, n, p, &spec.noise_covariance());
            Ok((x + &w, Corruption::Noise(w)))
        }
        CorruptionSpec::Missing { rho } => {
            let keep = 1.0 - rho;
            let mut mask = DMatrix::from_element(n, p, true);
            let mut z = x.clone();
            for i in 0..n {
                for j in 0..p {
                    if !rng.random_bool(keep) {
                        mask[(i, j)] = false;
                        z[(i, j)] = 0.0;
                    }
                }
            }
            Ok((z, Corruption::Mask(mask)))
        }
    }
}

/// A full problem: design, corruption, `k`-sparse `+-1` regressor and response.
pub fn gen_instance(
    n: usize,
    p: usize,
    k: usize,
    design: &DesignSpec,
    corruption: &CorruptionSpec,
    seed: u64,
) -> Result<ProblemInstance> {
    if k > p {
        return Err(invalid(format!(
            "sparsity k = {k} exceeds dimension p = {p}"
        )));
    }
    corruption.validate(p)?;
    let x = gen_design(n, p, design, derive_seed(seed, "design", 0))?;
    let (z, realized) = corrupt(&x, corruption, derive_seed(seed, "corruption", 0))?;

    let mut rng = stream(derive_seed(seed, "support", 0));
    let mut support = rand::seq::index::sample(&mut rng, p, k).into_vec();
    support.sort_unstable();
    let mut beta_star = DVector::zeros(p);
    for &i in &support {
        beta_star[i] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }

    let mut rng = stream(derive_seed(seed, "noise", 0));
    let e_scale = design.sigma_e / (n as f64).sqrt();
    let e = DVector::from_fn(n, |_, _| e_scale * rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta_star + &e;

    Ok(ProblemInstance {
        n,
        p,
        k,
        x,
        z,
        corruption_realized: realized,
        e,
        beta_star,
        y,
        corruption: corruption.clone(),
        seed,
    })
}

/// Instrumental variables `U = X Gamma + E` and their generator parameters.
#[derive(Debug, Clone)]
pub struct IVSpec {
    pub u: DMatrix<f64>,
    pub m: usize,
    /// Sub-Gaussian scale of the rows of `U`, reported as `sqrt(d)` for a
    /// `d`-column design (the convention of the simulation protocol).
    pub sigma_u: f64,
    pub gamma: DMatrix<f64>,
}

impl IVSpec {
    pub fn from_matrix(u: DMatrix<f64>) -> Self {
        let m = u.ncols();
        Self {
            u,
            m,
            sigma_u: 1.0,
            gamma: DMatrix::zeros(0, m),
        }
    }
}

/// `Gamma` and `E` have standard Gaussian entries; `E` is scaled to row
/// variance `1/n` like the design.
pub fn gen_iv(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<IVSpec> {
    if m == 0 {
        return Err(invalid("instrument count m must be >= 1"));
    }
    let (n, d) = x.shape();
    let mut rng = stream(derive_seed(seed, "iv-gamma", 0));
    let gamma = gaussian_rows(&mut rng, d, m, 1.0);
    let mut rng = stream(derive_seed(seed, "iv-noise", 0));
    let e = gaussian_rows(&mut rng, n, m, 1.0 / (n as f64).sqrt());
    let u = x * &gamma + e;
    Ok(IVSpec {
        u,
        m,
        sigma_u: (d as f64).sqrt(),
        gamma,
    })
}

/// `(sigma_1, sigma_d)` of `Sigma_UX = Gamma^T Sigma_x`: the largest and the
/// `d`-th largest singular value, `d` being the design width.
pub fn iv_spectral_extremes(gamma: &DMatrix<f64>, sigma_x: &Covariance) -> (f64, f64) {
    let d = gamma.nrows();
    let sux = gamma.transpose() * sigma_x.to_dense(d);
    let s = linalg::singular_values_desc(&sux);
    let s1 = s.first().copied().unwrap_or(0.0);
    let sk = if s.len() >= d && d > 0 { s[d - 1] } else { 0.0 };
    (s1, sk)
}

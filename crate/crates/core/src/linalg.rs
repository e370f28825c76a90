//! Small dense linear-algebra helpers on top of `nalgebra`, plus the
//! structured covariance type shared by the generators and estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Replace `a` by `(a + a^T) / 2`.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let d = a.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let ev = SymmetricEigen::new(a.clone()).eigenvalues;
    ev.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

pub fn lambda_min(a: &DMatrix<f64>) -> f64 {
    eigen_extremes(a).0
}

/// Largest singular value.
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Singular values in decreasing order.
pub fn singular_values_desc(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let d = a.nrows();
    (0..d).all(|i| (0..i).all(|j| (a[(i, j)] - a[(j, i)]).abs() <= rel_tol * scale))
}

/// Columns of `a` listed in `cols`, in that order.
pub fn select_columns(a: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    a.select_columns(cols)
}

/// Principal submatrix with rows and columns in `idx`.
pub fn principal_submatrix(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Solve `a x = b` for symmetric `a`. Cholesky first; LU when Cholesky
/// rejects a matrix that is still nonsingular.
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

/// Solve with eigenvalues below `floor` clipped up to `floor`.
pub fn solve_eigen_clipped(a: &DMatrix<f64>, b: &DVector<f64>, floor: f64) -> DVector<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let v = &eig.eigenvectors;
    let mut coeffs = v.transpose() * b;
    for (c, &lam) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= lam.max(floor);
    }
    v * coeffs
}

/// Row covariance model used for designs and additive noise.
///
/// The matrix described here is the unscaled covariance; generators divide
/// by `n` internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum Covariance {
    /// `variance * I`.
    Isotropic(f64),
    /// Unit diagonal with constant off-diagonal correlation `c` in `[0, 1)`.
    Equicorrelated(f64),
    Dense(DMatrix<f64>),
}

impl Covariance {
    pub fn identity() -> Self {
        Covariance::Isotropic(1.0)
    }

    pub fn to_dense(&self, p: usize) -> DMatrix<f64> {
        match self {
            Covariance::Isotropic(v) => DMatrix::from_diagonal_element(p, p, *v),
            Covariance::Equicorrelated(c) => {
                DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { *c })
            }
            Covariance::Dense(m) => m.clone(),
        }
    }

    pub fn submatrix(&self, idx: &[usize]) -> DMatrix<f64> {
        match self {
            Covariance::Dense(m) => principal_submatrix(m, idx),
            other => other.to_dense(idx.len()),
        }
    }

    /// Checks the model is a valid covariance in dimension `p`. With
    /// `strict`, the matrix must be positive definite.
    pub fn validate(&self, p: usize, strict: bool) -> Result<()> {
        let ok = |lmin: f64| if strict { lmin > 0.0 } else { lmin >= 0.0 };
        match self {
            Covariance::Isotropic(v) => {
                if !v.is_finite() || !ok(*v) {
                    return Err(invalid(format!("covariance variance {v} not admissible")));
                }
            }
            Covariance::Equicorrelated(c) => {
                if !(0.0..1.0).contains(c) {
                    return Err(invalid(format!(
                        "equicorrelation {c} outside [0, 1); use a dense matrix"
                    )));
                }
            }
            Covariance::Dense(m) => {
                if m.nrows() != p || m.ncols() != p {
                    return Err(Error::DimensionMismatch {
                        what: "covariance matrix",
                        expected: p,
                        found: m.nrows().max(m.ncols()),
                    });
                }
                if m.iter().any(|v| !v.is_finite()) || !is_symmetric(m, 1e-10) {
                    return Err(invalid("covariance matrix must be finite and symmetric"));
                }
                let scale = max_abs(m).max(f64::MIN_POSITIVE);
                let lmin = lambda_min(m);
                let admissible = if strict {
                    lmin > 1e-12 * scale
                } else {
                    lmin >= -1e-10 * scale
                };
                if !admissible {
                    return Err(invalid(format!(
                        "covariance matrix not {}: lambda_min = {lmin:e}",
                        if strict { "positive definite" } else { "PSD" }
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Covariance::Isotropic(v) => *v == 0.0,
            Covariance::Equicorrelated(_) => false,
            Covariance::Dense(m) => m.iter().all(|v| *v == 0.0),
        }
    }

    pub fn lambda_min(&self, p: usize) -> f64 {
        match self {
            Covariance::Isotropic(v) => *v,
            Covariance::Equicorrelated(c) => {
                if p > 1 {
                    1.0 - c
                } else {
                    1.0
                }
            }
            Covariance::Dense(m) => lambda_min(m),
        }
    }
}

/// A square-root factor `F` with `F F^T = Sigma`, obtained by a symmetric
/// eigendecomposition so that singular PSD matrices are accepted.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut f = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

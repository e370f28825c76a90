//! Greedy support selection on the observed matrix followed by a corrected
//! estimate on the selected columns.
//!
//! The selection loop never looks at the corruption model: it scores
//! columns of `Z` against the current residual and projects `y` onto the
//! span of the selected columns. Knowledge of `Sigma_w`, `Sigma_x`, the
//! instruments or the erasure rate enters only through the final
//! [`FinalEstimatorChoice`].

use nalgebra::{DMatrix, DVector};

use crate::datagen::IVSpec;
use crate::error::{check_dim, invalid, Error, Result};
use crate::estimators::{self, EstimatorKind, MomentEstimate, PsdRepair};
use crate::linalg::{self, Covariance};

/// The knowledge model used for the final low-dimensional solve.
#[derive(Debug, Clone)]
pub enum FinalEstimatorChoice {
    KnownSigmaW(Covariance),
    UpperBoundSigmaW(Covariance),
    KnownSigmaX(Covariance),
    InstrumentalVariable(IVSpec),
    MissingData(f64),
    CleanLS,
}

impl FinalEstimatorChoice {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            FinalEstimatorChoice::KnownSigmaW(_) => EstimatorKind::KnownSigmaW,
            FinalEstimatorChoice::UpperBoundSigmaW(_) => EstimatorKind::UpperBoundSigmaW,
            FinalEstimatorChoice::KnownSigmaX(_) => EstimatorKind::KnownSigmaX,
            FinalEstimatorChoice::InstrumentalVariable(_) => EstimatorKind::InstrumentalVariable,
            FinalEstimatorChoice::MissingData(_) => EstimatorKind::MissingData,
            FinalEstimatorChoice::CleanLS => EstimatorKind::CleanLS,
        }
    }

    /// Moment pair restricted to the columns `support` of `z`.
    pub fn restricted_moments(
        &self,
        z: &DMatrix<f64>,
        y: &DVector<f64>,
        support: &[usize],
    ) -> Result<MomentEstimate> {
        let zi = linalg::select_columns(z, support);
        match self {
            FinalEstimatorChoice::KnownSigmaW(c) => {
                estimators::build_known_sigma_w(&zi, y, &c.submatrix(support))
            }
            FinalEstimatorChoice::UpperBoundSigmaW(c) => {
                estimators::build_upper_bound_sigma_w(&zi, y, &c.submatrix(support))
            }
            FinalEstimatorChoice::KnownSigmaX(c) => {
                estimators::build_known_sigma_x(&zi, y, &c.submatrix(support))
            }
            FinalEstimatorChoice::InstrumentalVariable(iv) => estimators::build_iv(&zi, y, iv),
            FinalEstimatorChoice::MissingData(rho) => estimators::build_missing(&zi, y, *rho),
            FinalEstimatorChoice::CleanLS => estimators::build_clean(&zi, y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub selected_index: usize,
    /// `|h_{i*}|`.
    pub score_selected: f64,
    /// Largest `|h_i|` among the columns not chosen; 0 when none remain.
    pub max_rival_score: f64,
    /// `||r||_2` after the projection update.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitDiagnostics {
    pub lambda_min_final: f64,
    pub condition_number: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: DVector<f64>,
    /// Selected column indices (0-based) in selection order.
    pub support: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub estimator_kind: EstimatorKind,
    pub diagnostics: FitDiagnostics,
}

/// Outcome of the selection loop alone.
#[derive(Debug, Clone)]
pub struct Selection {
    pub support: Vec<usize>,
    pub trace: Vec<IterationRecord>,
    pub residual: DVector<f64>,
}

const SINGULAR_RCOND: f64 = 1e-13;

/// `k` greedy steps: score `h_i = Z_i^T r`, take the largest `|h_i|`
/// (lowest index on ties), then `r = y - P_I y`. The residual starts at `y`.
pub fn select_support(z: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<Selection> {
    let (n, p) = z.shape();
    check_dim("response length", n, y.len())?;
    if k == 0 || k > n.min(p) {
        return Err(invalid(format!(
            "need 1 <= k <= min(n, p) = {}, got k = {k}",
            n.min(p)
        )));
    }
    let mut selected = vec![false; p];
    let mut support = Vec::with_capacity(k);
    let mut trace = Vec::with_capacity(k);
    let mut residual = y.clone();

    for iteration in 1..=k {
        let scores = z.tr_mul(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (i, h) in scores.iter().enumerate() {
            if selected[i] {
                continue;
            }
            let s = h.abs();
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (chosen, score) = best.expect("k <= p leaves a candidate");
        let rival = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| !selected[*i] && *i != chosen)
            .fold(0.0_f64, |m, (_, h)| m.max(h.abs()));

        selected[chosen] = true;
        support.push(chosen);
        residual = project_out(z, y, &support).ok_or(Error::SingularGram { iteration })?;

        trace.push(IterationRecord {
            iteration,
            selected_index: chosen,
            score_selected: score,
            max_rival_score: rival,
            residual_norm: residual.norm(),
        });
    }
    Ok(Selection {
        support,
        trace,
        residual,
    })
}

/// `y - Z_I (Z_I^T Z_I)^{-1} Z_I^T y`, or `None` if the Gram matrix is
/// numerically singular.
fn project_out(z: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Option<DVector<f64>> {
    let zi = linalg::select_columns(z, support);
    let chol = zi.tr_mul(&zi).cholesky()?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    if hi.is_nan() || hi <= 0.0 || (lo / hi).powi(2) < SINGULAR_RCOND {
        return None;
    }
    let coef = chol.solve(&zi.tr_mul(y));
    Some(y - zi * coef)
}

/// The modified OMP: selection on `Z`, final corrected estimate on the
/// selected support, zero elsewhere.
pub fn mod_omp(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    final_choice: &FinalEstimatorChoice,
) -> Result<FitResult> {
    mod_omp_with(z, y, k, final_choice, PsdRepair::Fail)
}

pub fn mod_omp_with(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    k: usize,
    final_choice: &FinalEstimatorChoice,
    repair: PsdRepair,
) -> Result<FitResult> {
    let selection = select_support(z, y, k)?;
    finish(z, y, selection, final_choice, repair)
}

/// Final step of [`mod_omp`] on an already computed selection.
pub fn finish(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    selection: Selection,
    final_choice: &FinalEstimatorChoice,
    repair: PsdRepair,
) -> Result<FitResult> {
    let est = final_choice.restricted_moments(z, y, &selection.support)?;
    let coef = estimators::solve_corrected_with(&est, est.default_lambda_floor(), repair)?;
    let mut beta_hat = DVector::zeros(z.ncols());
    for (&i, &b) in selection.support.iter().zip(coef.iter()) {
        beta_hat[i] = b;
    }
    Ok(FitResult {
        beta_hat,
        support: selection.support,
        trace: selection.trace,
        estimator_kind: est.kind,
        diagnostics: FitDiagnostics {
            lambda_min_final: est.lambda_min,
            condition_number: est.condition_number(),
        },
    })
}

/// Plain OMP on clean covariates with least squares on the support.
pub fn standard_omp(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<FitResult> {
    mod_omp(x, y, k, &FinalEstimatorChoice::CleanLS)
}

/// OMP run on corrupted covariates as if they were clean.
pub fn naive_omp(z: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<FitResult> {
    standard_omp(z, y, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_design, gen_instance, CorruptionSpec, DesignSpec};
    use proptest::prelude::*;

    fn orthonormal(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let g = gen_design(n, p, &DesignSpec::isotropic(0.0), seed).unwrap();
        g.qr().q()
    }

    #[test]
    fn orthonormal_single_step() {
        let z = orthonormal(6, 4, 1);
        let y = z.column(1) * 3.0;
        let fit = mod_omp(&z, &y, 1, &FinalEstimatorChoice::CleanLS).unwrap();
        assert_eq!(fit.support, vec![1]);
        assert!((fit.beta_hat[1] - 3.0).abs() < 1e-12);
        for i in [0, 2, 3] {
            assert_eq!(fit.beta_hat[i], 0.0);
        }
    }

    #[test]
    fn hand_computed_scores() {
        // columns (1,0), (0,1), (0.6,0.8); y = (0.6,0.8)
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.6, 0.0, 1.0, 0.8]);
        let y = DVector::from_vec(vec![0.6, 0.8]);
        let sel = select_support(&z, &y, 1).unwrap();
        assert_eq!(sel.support, vec![2]);
        assert!((sel.trace[0].score_selected - 1.0).abs() < 1e-15);
        assert!((sel.trace[0].max_rival_score - 0.8).abs() < 1e-15);
        let scores = z.tr_mul(&y);
        let want = [0.6, 0.8, 1.0];
        for (s, w) in scores.iter().zip(want) {
            assert!((s - w).abs() < 1e-15);
        }
    }

    #[test]
    fn ties_pick_lowest_index() {
        let z = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0]);
        let sel = select_support(&z, &y, 2).unwrap();
        assert_eq!(sel.support, vec![0, 1]);
    }

    #[test]
    fn standard_omp_identity() {
        let x = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![0.0, 5.0, 0.0]);
        let fit = standard_omp(&x, &y, 1).unwrap();
        assert_eq!(fit.support, vec![1]);
        assert_eq!(fit.beta_hat, DVector::from_vec(vec![0.0, 5.0, 0.0]));
    }

    #[test]
    fn orthogonal_exact_recovery_in_magnitude_order() {
        let x = orthonormal(10, 6, 3);
        let beta = DVector::from_vec(vec![0.0, -4.0, 0.0, 1.0, 2.5, 0.0]);
        let y = &x * &beta;
        let fit = standard_omp(&x, &y, 3).unwrap();
        assert_eq!(fit.support, vec![1, 4, 3]);
        assert!((fit.beta_hat - beta).norm() < 1e-12);
    }

    #[test]
    fn interpolation_on_true_support() {
        for seed in 0..20 {
            let inst = gen_instance(
                100,
                20,
                3,
                &DesignSpec::isotropic(0.0),
                &CorruptionSpec::Clean,
                seed,
            )
            .unwrap();
            let fit = standard_omp(&inst.x, &inst.y, 3).unwrap();
            let last = fit.trace.last().unwrap();
            assert!(
                last.residual_norm <= 1e-8,
                "seed {seed}: {}",
                last.residual_norm
            );
        }
    }

    #[test]
    fn naive_equals_standard_without_noise() {
        let inst = gen_instance(
            50,
            30,
            4,
            &DesignSpec::isotropic(0.1),
            &CorruptionSpec::additive(0.0),
            9,
        )
        .unwrap();
        let a = naive_omp(&inst.z, &inst.y, 4).unwrap();
        let b = standard_omp(&inst.x, &inst.y, 4).unwrap();
        assert_eq!(a.support, b.support);
        assert_eq!(a.beta_hat, b.beta_hat);
    }

    #[test]
    fn clean_instance_matches_standard_omp() {
        for seed in 0..10 {
            let inst = gen_instance(
                60,
                40,
                4,
                &DesignSpec::isotropic(0.2),
                &CorruptionSpec::missing(0.0),
                seed,
            )
            .unwrap();
            let a = mod_omp(&inst.z, &inst.y, 4, &FinalEstimatorChoice::CleanLS).unwrap();
            let b = standard_omp(&inst.x, &inst.y, 4).unwrap();
            assert_eq!(a.support, b.support);
            assert_eq!(a.beta_hat, b.beta_hat);
        }
    }

    #[test]
    fn invalid_k_and_singular_gram() {
        let z = DMatrix::identity(3, 3);
        let y = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(select_support(&z, &y, 0).is_err());
        assert!(select_support(&z, &y, 4).is_err());

        // duplicate column: after step 1 the residual is zero and the tie
        // goes to the copy
        let z = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            select_support(&z, &y, 2),
            Err(Error::SingularGram { iteration: 2 })
        ));
    }

    #[test]
    fn final_choice_does_not_affect_selection() {
        let inst = gen_instance(
            80,
            60,
            4,
            &DesignSpec::isotropic(0.0),
            &CorruptionSpec::additive(0.5),
            12,
        )
        .unwrap();
        let choices = [
            FinalEstimatorChoice::KnownSigmaW(Covariance::Isotropic(0.25)),
            FinalEstimatorChoice::KnownSigmaW(Covariance::Isotropic(0.0625)),
            FinalEstimatorChoice::KnownSigmaW(Covariance::Isotropic(1.0)),
            FinalEstimatorChoice::KnownSigmaX(Covariance::identity()),
            FinalEstimatorChoice::CleanLS,
        ];
        let supports: Vec<_> = choices
            .iter()
            .map(|c| {
                mod_omp_with(&inst.z, &inst.y, 4, c, PsdRepair::ClipEigenvalues)
                    .unwrap()
                    .support
            })
            .collect();
        assert!(supports.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn iv_final_step_uses_full_instruments() {
        let inst = gen_instance(
            200,
            30,
            3,
            &DesignSpec::isotropic(0.0),
            &CorruptionSpec::additive(0.0),
            4,
        )
        .unwrap();
        let iv = crate::datagen::gen_iv(&inst.x, 6, 4).unwrap();
        let fit = mod_omp(
            &inst.z,
            &inst.y,
            3,
            &FinalEstimatorChoice::InstrumentalVariable(iv),
        )
        .unwrap();
        assert_eq!(fit.estimator_kind, EstimatorKind::InstrumentalVariable);
        assert!((fit.beta_hat - &inst.beta_star).norm() < 1e-8);
    }

    proptest! {
        #[test]
        fn fit_invariants(seed in 0u64..2000, k in 1usize..6, sw in 0.0f64..1.0) {
            let inst = gen_instance(40, 25, k, &DesignSpec::isotropic(0.3), &CorruptionSpec::additive(sw), seed).unwrap();
            let fit = mod_omp_with(
                &inst.z, &inst.y, k,
                &FinalEstimatorChoice::KnownSigmaW(inst.corruption.noise_covariance()),
                PsdRepair::ClipEigenvalues,
            ).unwrap();
            prop_assert_eq!(fit.support.len(), k);
            let mut s = fit.support.clone();
            s.sort_unstable();
            s.dedup();
            prop_assert_eq!(s.len(), k);
            for i in 0..25 {
                if !fit.support.contains(&i) {
                    prop_assert_eq!(fit.beta_hat[i], 0.0);
                }
            }
            let scale = inst.y.norm().max(1.0);
            for w in fit.trace.windows(2) {
                prop_assert!(w[1].residual_norm <= w[0].residual_norm + 1e-12 * scale);
            }
            // Z_I^T r = 0 after the last update
            let sel = select_support(&inst.z, &inst.y, k).unwrap();
            let zi = linalg::select_columns(&inst.z, &sel.support);
            prop_assert!(zi.tr_mul(&sel.residual).amax() <= 1e-8 * scale);
        }

        #[test]
        fn selection_is_scale_invariant(seed in 0u64..2000, c in 0.01f64..100.0) {
            let inst = gen_instance(40, 25, 3, &DesignSpec::isotropic(0.3), &CorruptionSpec::missing(0.2), seed).unwrap();
            let a = mod_omp(&inst.z, &inst.y, 3, &FinalEstimatorChoice::CleanLS).unwrap();
            let b = mod_omp(&inst.z, &(&inst.y * c), 3, &FinalEstimatorChoice::CleanLS).unwrap();
            prop_assert_eq!(&a.support, &b.support);
            prop_assert!((&a.beta_hat * c - &b.beta_hat).norm() <= 1e-9 * (1.0 + b.beta_hat.norm()));
        }
    }
}

//! Error and support metrics, control parameters, and the collapse fit used
//! to check that error curves line up against their control parameter.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};

pub fn l2_error(beta_hat: &DVector<f64>, beta_star: &DVector<f64>) -> Result<f64> {
    check_dim("coefficient vector", beta_star.len(), beta_hat.len())?;
    Ok((beta_hat - beta_star).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub exact_match: bool,
    pub precision: f64,
    pub recall: f64,
    /// True support is contained in the selection.
    pub superset: bool,
}

/// Set-overlap statistics. An empty selection has precision 1; an empty
/// truth has recall 1.
pub fn support_report(selected: &[usize], truth: &[usize]) -> SupportReport {
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    let tru: BTreeSet<usize> = truth.iter().copied().collect();
    let hits = sel.intersection(&tru).count() as f64;
    let precision = if sel.is_empty() {
        1.0
    } else {
        hits / sel.len() as f64
    };
    let recall = if tru.is_empty() {
        1.0
    } else {
        hits / tru.len() as f64
    };
    SupportReport {
        exact_match: sel == tru,
        precision,
        recall,
        superset: tru.is_subset(&sel),
    }
}

/// The scalar each estimator's error is predicted to be proportional to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlParameter {
    /// `(sigma_w + sigma_w^2) k`
    SigmaW,
    /// `(1 + sigma_w) k`
    SigmaX,
    /// `sigma_w k`
    InstrumentalVariable,
    /// `k sqrt(rho) / (1 - rho)`
    Missing,
    /// `rho sqrt(k)`, an alternative missing-data control parameter.
    MissingAlt,
}

impl ControlParameter {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "sigma_w" => ControlParameter::SigmaW,
            "sigma_x" => ControlParameter::SigmaX,
            "iv" => ControlParameter::InstrumentalVariable,
            "missing" => ControlParameter::Missing,
            "missing_alt" => ControlParameter::MissingAlt,
            other => return Err(invalid(format!("unknown control parameter `{other}`"))),
        })
    }
}

pub fn control_param(kind: ControlParameter, k: usize, sigma_w: f64, rho: f64) -> Result<f64> {
    let k = k as f64;
    let uses_rho = matches!(
        kind,
        ControlParameter::Missing | ControlParameter::MissingAlt
    );
    if uses_rho && !(0.0..1.0).contains(&rho) {
        return Err(invalid(format!("rho must lie in [0, 1), got {rho}")));
    }
    if !uses_rho && (sigma_w.is_nan() || sigma_w < 0.0) {
        return Err(invalid(format!("sigma_w must be >= 0, got {sigma_w}")));
    }
    Ok(match kind {
        ControlParameter::SigmaW => (sigma_w + sigma_w * sigma_w) * k,
        ControlParameter::SigmaX => (1.0 + sigma_w) * k,
        ControlParameter::InstrumentalVariable => sigma_w * k,
        ControlParameter::Missing => k * rho.sqrt() / (1.0 - rho),
        ControlParameter::MissingAlt => rho * k.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseFit {
    /// Origin-line slope per group, keyed by the group label (usually `k`).
    pub per_group_slope: BTreeMap<usize, f64>,
    /// Slope of the origin line through all points.
    pub pooled_slope: f64,
    /// `1 - SS_res / SS_tot` of the pooled origin line, with `SS_tot` taken
    /// about the mean error (centered).
    pub pooled_r2: f64,
    /// `(max slope - min slope) / median slope`.
    pub slope_dispersion: f64,
}

/// Points are `(group, control_value, mean_error)`.
///
/// Each group gets a least-squares line through the origin. The result does
/// not depend on the order of `points`.
pub fn collapse_fit(points: &[(usize, f64, f64)]) -> Result<CollapseFit> {
    let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for &(g, x, y) in points {
        if !(x.is_finite() && y.is_finite()) {
            return Err(invalid(format!("non-finite collapse point ({x}, {y})")));
        }
        groups.entry(g).or_default().push((x, y));
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientPoints(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (g, pts) in groups.iter_mut() {
        if pts.len() < 3 {
            return Err(Error::InsufficientPoints(format!(
                "group {g} has {} points, need 3",
                pts.len()
            )));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }

    let origin_slope = |pts: &[(f64, f64)]| -> Result<f64> {
        let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
        if sxx > 0.0 {
            Ok(sxy / sxx)
        } else {
            Err(Error::InsufficientPoints(
                "all control values are zero".into(),
            ))
        }
    };

    let mut per_group_slope = BTreeMap::new();
    for (g, pts) in &groups {
        per_group_slope.insert(*g, origin_slope(pts)?);
    }
    let all: Vec<(f64, f64)> = groups.values().flatten().copied().collect();
    let pooled_slope = origin_slope(&all)?;
    let mean_y = all.iter().map(|(_, y)| y).sum::<f64>() / all.len() as f64;
    let ss_res: f64 = all
        .iter()
        .map(|(x, y)| (y - pooled_slope * x).powi(2))
        .sum();
    let ss_tot: f64 = all.iter().map(|(_, y)| (y - mean_y).powi(2)).sum();
    let pooled_r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    };

    let mut slopes: Vec<f64> = per_group_slope.values().copied().collect();
    slopes.sort_by(f64::total_cmp);
    let median = median_sorted(&slopes);
    let spread = slopes[slopes.len() - 1] - slopes[0];
    let slope_dispersion = if median != 0.0 {
        spread / median.abs()
    } else if spread == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };

    Ok(CollapseFit {
        per_group_slope,
        pooled_slope,
        pooled_r2,
        slope_dispersion,
    })
}

pub(crate) fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    median_sorted(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn l2_examples() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(l2_error(&a, &a).unwrap(), 0.0);
        assert!((l2_error(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(l2_error(&a, &DVector::zeros(3)).is_err());
        let u = DVector::from_vec(vec![3.0, -1.0, 2.0]);
        let w = DVector::from_vec(vec![0.5, 4.0, 1.0]);
        let perm = |v: &DVector<f64>| DVector::from_vec(vec![v[2], v[0], v[1]]);
        assert_eq!(
            l2_error(&u, &w).unwrap(),
            l2_error(&perm(&u), &perm(&w)).unwrap()
        );
    }

    #[test]
    fn support_examples() {
        let r = support_report(&[1, 2], &[1, 2]);
        assert!(r.exact_match && r.superset);
        assert_eq!((r.precision, r.recall), (1.0, 1.0));

        let r = support_report(&[1, 2, 3], &[1, 2]);
        assert!(r.superset && !r.exact_match);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-15);

        let r = support_report(&[], &[1]);
        assert_eq!((r.precision, r.recall), (1.0, 0.0));
        assert!(!r.superset);
    }

    #[test]
    fn control_examples() {
        assert_eq!(
            control_param(ControlParameter::SigmaW, 3, 1.0, 0.0).unwrap(),
            6.0
        );
        assert_eq!(
            control_param(ControlParameter::Missing, 4, 0.0, 0.0).unwrap(),
            0.0
        );
        assert_eq!(
            control_param(ControlParameter::SigmaX, 2, 0.5, 0.0).unwrap(),
            3.0
        );
        assert_eq!(
            control_param(ControlParameter::InstrumentalVariable, 4, 0.5, 0.0).unwrap(),
            2.0
        );
        assert!(
            (control_param(ControlParameter::MissingAlt, 4, 0.0, 0.5).unwrap() - 1.0).abs() < 1e-15
        );
        assert!(control_param(ControlParameter::Missing, 4, 0.0, 1.0).is_err());
        assert!(ControlParameter::parse("bogus").is_err());
    }

    #[test]
    fn control_monotone_and_zero_only_at_zero() {
        let kinds = [
            ControlParameter::SigmaW,
            ControlParameter::InstrumentalVariable,
            ControlParameter::Missing,
            ControlParameter::MissingAlt,
        ];
        for kind in kinds {
            let rho_axis = matches!(
                kind,
                ControlParameter::Missing | ControlParameter::MissingAlt
            );
            let at = |t: f64| {
                let (s, r) = if rho_axis { (0.0, t) } else { (t, 0.0) };
                control_param(kind, 5, s, r).unwrap()
            };
            assert_eq!(at(0.0), 0.0);
            let mut prev = 0.0;
            for i in 1..10 {
                let v = at(i as f64 * 0.09);
                assert!(v > prev, "{kind:?}");
                prev = v;
            }
        }
        let a = control_param(ControlParameter::SigmaX, 3, 0.2, 0.0).unwrap();
        let b = control_param(ControlParameter::SigmaX, 3, 0.4, 0.0).unwrap();
        assert!(b > a && a > 0.0);
    }

    fn grid(slopes: &[(usize, f64)]) -> Vec<(usize, f64, f64)> {
        slopes
            .iter()
            .flat_map(|&(g, s)| {
                (1..=4).map(move |i| (g, i as f64 * g as f64, s * i as f64 * g as f64))
            })
            .collect()
    }

    #[test]
    fn exact_proportionality() {
        let fit = collapse_fit(&grid(&[(2, 2.0), (3, 2.0), (4, 2.0)])).unwrap();
        assert!(fit
            .per_group_slope
            .values()
            .all(|s| (s - 2.0).abs() < 1e-14));
        assert!((fit.pooled_r2 - 1.0).abs() < 1e-14);
        assert!(fit.slope_dispersion.abs() < 1e-14);
    }

    #[test]
    fn scaled_group_dispersion() {
        let fit = collapse_fit(&grid(&[(2, 2.0), (3, 2.0), (4, 3.0)])).unwrap();
        assert!((fit.slope_dispersion - 0.5).abs() < 1e-12);
        assert!(fit.pooled_r2 < 1.0);
    }

    #[test]
    fn collapse_needs_enough_points() {
        assert!(matches!(
            collapse_fit(&grid(&[(2, 1.0)])),
            Err(Error::InsufficientPoints(_))
        ));
        let mut pts = grid(&[(2, 1.0), (3, 1.0)]);
        pts.retain(|p| !(p.0 == 3 && p.1 > 6.0));
        assert!(collapse_fit(&pts).is_err());
    }

    proptest! {
        #[test]
        fn collapse_is_order_invariant(
            pts in proptest::collection::vec((2usize..5, 0.1f64..10.0, 0.0f64..5.0), 12..30),
            rot in 0usize..30,
        ) {
            let mut pts = pts;
            for g in 2..5 {
                for i in 0..3 {
                    pts.push((g, 1.0 + i as f64, 0.5 * (1.0 + i as f64)));
                }
            }
            let a = collapse_fit(&pts).unwrap();
            let r = rot % pts.len();
            pts.rotate_left(r);
            pts.reverse();
            let b = collapse_fit(&pts).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn support_report_relabeling(
            sel in proptest::collection::btree_set(0usize..20, 0..8),
            tru in proptest::collection::btree_set(0usize..20, 0..8),
            shift in 1usize..50,
        ) {
            let sel: Vec<usize> = sel.into_iter().collect();
            let tru: Vec<usize> = tru.into_iter().collect();
            let relabel = |v: &[usize]| v.iter().map(|i| (i * 7 + shift) % 20 + 100).collect::<Vec<_>>();
            let a = support_report(&sel, &tru);
            let b = support_report(&relabel(&sel), &relabel(&tru));
            prop_assert_eq!(a, b);
            if a.exact_match {
                prop_assert!(a.precision == 1.0 && a.recall == 1.0);
            }
        }
    }
}

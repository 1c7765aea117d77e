//! Exhaustive oracles for tiny instances.
//!
//! These enumerate every subset of a given size. The enumeration guards are
//! hard limits: exceeding one is an error, never a silent subsample. Ties
//! resolve to the lexicographically smallest subset, which is the first one
//! the enumeration visits.

use itertools::Itertools;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::driver::EstimationTrace;
use crate::error::{Error, Result};
use crate::glm::{fraction_count, subset_loss, Dataset, Parameter};
use crate::update::closed_form_ls;

/// Default largest `n` accepted by [`exact_trimmed_loss`].
pub const DEFAULT_MAX_EXACT_N: usize = 20;
/// Default largest number of subsets [`regularity_constants`] enumerates.
pub const DEFAULT_MAX_SUBSETS: u128 = 200_000;

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactTrimmed {
    pub theta: Parameter,
    pub subset: Vec<usize>,
    pub value: f64,
    /// Subsets skipped as rank-deficient.
    pub skipped: u128,
}

/// The exact trimmed-loss estimator, with the default guard.
pub fn exact_trimmed_loss(dataset: &Dataset, alpha: f64) -> Result<ExactTrimmed> {
    exact_trimmed_loss_with_guard(dataset, alpha, DEFAULT_MAX_EXACT_N)
}

/// Minimizes the trimmed loss jointly over the subset and `θ` by solving
/// least squares on every subset of size `⌊αn⌋`. Identity link only.
pub fn exact_trimmed_loss_with_guard(dataset: &Dataset, alpha: f64, max_n: usize) -> Result<ExactTrimmed> {
    if !dataset.link().is_identity() {
        return Err(Error::NonIdentityLink);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let (n, d) = (dataset.n(), dataset.d());
    if n > max_n {
        return Err(Error::EnumerationGuard { count: n as u128, guard: max_n as u128 });
    }
    let k = fraction_count(alpha, n);
    if k == 0 {
        return Err(Error::SelectionSize { k, n });
    }
    if k < d {
        return Err(Error::SubsetTooSmall { size: k, d });
    }

    let mut best: Option<ExactTrimmed> = None;
    let mut skipped = 0u128;
    for subset in (0..n).combinations(k) {
        let theta = match closed_form_ls(dataset, &subset) {
            Ok(theta) => theta,
            Err(Error::RankDeficient { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let value = subset_loss(&theta, dataset, &subset)?;
        if best.as_ref().is_none_or(|b| value < b.value) {
            best = Some(ExactTrimmed { theta, subset, value, skipped: 0 });
        }
    }
    let mut best = best.ok_or(Error::AllSubsetsDeficient { count: skipped })?;
    best.skipped = skipped;
    Ok(best)
}

/// Extreme singular values of `ΦᵀWΦ` over all `k`-row selections `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub k: usize,
    /// `ψ⁻(k)`: smallest `σ_min` over all selections.
    pub psi_minus: f64,
    /// `ψ⁺(k)`: largest `σ_max` over all selections.
    pub psi_plus: f64,
    pub argmin_subset: Vec<usize>,
    pub argmax_subset: Vec<usize>,
}

pub fn regularity_constants(features: &DMatrix<f64>, k: usize) -> Result<RegularityReport> {
    regularity_constants_with_guard(features, k, DEFAULT_MAX_SUBSETS)
}

pub fn regularity_constants_with_guard(features: &DMatrix<f64>, k: usize, max_subsets: u128) -> Result<RegularityReport> {
    let (n, d) = features.shape();
    if d == 0 || d > n {
        return Err(Error::config(format!("regularity constants need 1 <= d <= n, got d={d} n={n}")));
    }
    if k == 0 || k > n {
        return Err(Error::SelectionSize { k, n });
    }
    let count = binomial(n, k);
    if count > max_subsets {
        return Err(Error::EnumerationGuard { count, guard: max_subsets });
    }

    let outer: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let row = features.row(i);
            row.transpose() * row
        })
        .collect();
    let mut report: Option<RegularityReport> = None;
    for subset in (0..n).combinations(k) {
        let gram = subset.iter().fold(DMatrix::zeros(d, d), |acc, &i| acc + &outer[i]);
        let eig = SymmetricEigen::new(gram);
        let abs = eig.eigenvalues.map(f64::abs);
        let (smin, smax) = (abs.min(), abs.max());
        match report.as_mut() {
            None => {
                report = Some(RegularityReport {
                    k,
                    psi_minus: smin,
                    psi_plus: smax,
                    argmin_subset: subset.clone(),
                    argmax_subset: subset,
                })
            }
            Some(r) => {
                if smin < r.psi_minus {
                    r.psi_minus = smin;
                    r.argmin_subset = subset.clone();
                }
                if smax > r.psi_plus {
                    r.psi_plus = smax;
                    r.argmax_subset = subset;
                }
            }
        }
    }
    Ok(report.expect("at least one subset exists"))
}

/// `|Sₜ \ S*|` for every round of `trace` that selected a subset.
pub fn contamination_profile(dataset: &Dataset, trace: &EstimationTrace) -> Result<Vec<usize>> {
    let truth = dataset.truth().ok_or(Error::MissingTruth)?;
    trace
        .rounds
        .iter()
        .filter_map(|r| r.selected.as_ref())
        .map(|subset| {
            dataset.check_subset(subset)?;
            Ok(subset.iter().filter(|&&i| !truth.clean_mask[i]).count())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{run_itlm, Init, ItlmConfig};
    use crate::glm::{trimmed_loss, LinkFunction, Truth};
    use crate::update::UpdatePolicy;
    use nalgebra::DVector;

    fn one_dim(phis: &[f64], ys: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = phis.iter().map(|&p| vec![p]).collect();
        Dataset::from_rows(&rows, ys, LinkFunction::Identity).unwrap()
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(8, 4), 70);
        assert_eq!(binomial(20, 10), 184_756);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118_264_581_564_861_424);
    }

    #[test]
    fn exact_trimmed_coincident_points() {
        let data = one_dim(&[1.0; 5], &[0.0, 0.0, 0.0, 10.0, 10.0]);
        let exact = exact_trimmed_loss(&data, 0.6).unwrap();
        assert_eq!(exact.theta.as_slice(), &[0.0]);
        assert_eq!(exact.subset, vec![0, 1, 2]);
        assert_eq!(exact.value, 0.0);
    }

    #[test]
    fn exact_trimmed_clean_data_recovers_truth() {
        let phis = [0.5, -1.0, 2.0, 1.5, -0.3, 0.8];
        let ys: Vec<f64> = phis.iter().map(|p| 3.0 * p).collect();
        let exact = exact_trimmed_loss(&one_dim(&phis, &ys), 0.5).unwrap();
        assert!((exact.theta[0] - 3.0).abs() < 1e-14);
        assert!(exact.value < 1e-25);
    }

    #[test]
    fn exact_trimmed_guards_and_errors() {
        let data = one_dim(&[1.0; 21], &[0.0; 21]);
        assert!(matches!(exact_trimmed_loss(&data, 0.5), Err(Error::EnumerationGuard { .. })));
        let data = one_dim(&[0.0; 4], &[1.0; 4]);
        assert!(matches!(exact_trimmed_loss(&data, 0.5), Err(Error::AllSubsetsDeficient { count: 6 })));
        let kinked = Dataset::from_rows(&[vec![1.0]], &[1.0], LinkFunction::piecewise(1.0, 2.0).unwrap()).unwrap();
        assert!(matches!(exact_trimmed_loss(&kinked, 1.0), Err(Error::NonIdentityLink)));
    }

    #[test]
    fn exact_trimmed_skips_degenerate_subsets() {
        let data = one_dim(&[0.0, 0.0, 1.0, 2.0], &[5.0, 5.0, 1.0, 2.0]);
        let exact = exact_trimmed_loss(&data, 0.5).unwrap();
        assert_eq!(exact.skipped, 1);
        assert_eq!(exact.subset, vec![2, 3]);
        assert!((exact.theta[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exact_value_bounds_trimmed_loss_everywhere() {
        let phis = [0.3, -1.2, 0.7, 2.0, -0.4, 1.1, -2.2, 0.9];
        let ys = [0.5, -1.0, 9.0, 2.2, -0.1, -7.0, -2.0, 1.0];
        let data = one_dim(&phis, &ys);
        let exact = exact_trimmed_loss(&data, 0.5).unwrap();
        for step in -200..=200 {
            let theta = Parameter::from_slice(&[step as f64 * 0.025]).unwrap();
            assert!(exact.value <= trimmed_loss(&theta, &data, 0.5).unwrap().value + 1e-12);
        }
        let itlm = run_itlm(&data, &ItlmConfig::new(0.5, 10, UpdatePolicy::closed_form(), 0)).unwrap();
        assert!(itlm.rounds.last().unwrap().trimmed_loss >= exact.value - 1e-12);
    }

    #[test]
    fn regularity_hand_examples() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let r = regularity_constants(&x, 1).unwrap();
        assert_eq!((r.psi_minus, r.psi_plus), (1.0, 4.0));
        assert_eq!((r.argmin_subset, r.argmax_subset), (vec![0], vec![1]));
        let r = regularity_constants(&x, 2).unwrap();
        assert_eq!((r.psi_minus, r.psi_plus), (5.0, 5.0));
    }

    #[test]
    fn regularity_errors() {
        let x = DMatrix::from_element(30, 2, 1.0);
        assert!(matches!(regularity_constants(&x, 15), Err(Error::EnumerationGuard { .. })));
        assert!(regularity_constants(&x, 0).is_err());
        assert!(regularity_constants(&x, 31).is_err());
        assert!(regularity_constants(&DMatrix::from_element(1, 2, 1.0), 1).is_err());
    }

    #[test]
    fn contamination_counts() {
        let data = one_dim(&[1.0; 4], &[0.0, 0.0, 5.0, 5.0]);
        let clean = data
            .clone()
            .with_truth(Truth {
                theta_star: vec![DVector::zeros(1)],
                clean_mask: vec![true; 4],
                component_id: vec![Some(0); 4],
            })
            .unwrap();
        let trace = run_itlm(&clean, &ItlmConfig::new(0.5, 3, UpdatePolicy::closed_form(), 0)).unwrap();
        assert_eq!(contamination_profile(&clean, &trace).unwrap(), vec![0, 0, 0]);

        let mixed = data
            .clone()
            .with_truth(Truth {
                theta_star: vec![DVector::zeros(1)],
                clean_mask: vec![false, false, true, true],
                component_id: vec![None, None, Some(0), Some(0)],
            })
            .unwrap();
        let from_zero = ItlmConfig::new(0.5, 2, UpdatePolicy::closed_form(), 0).with_init(Init::Zero);
        let trace = run_itlm(&mixed, &from_zero).unwrap();
        // Both rounds select the zero-response rows, which are the bad ones here.
        assert_eq!(contamination_profile(&mixed, &trace).unwrap(), vec![2, 2]);

        assert!(matches!(contamination_profile(&data, &trace), Err(Error::MissingTruth)));
    }
}

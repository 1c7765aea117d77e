//! Generalized linear models with squared loss.
//!
//! A sample `i` is the pair `(φ(xᵢ), yᵢ)` where `φ(xᵢ)` is row `i` of the
//! feature matrix. Predictions go through a monotone link `ω`, and the
//! per-sample loss is `(y − ω(φᵀθ))²` with no ½ factor.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::selection::select_k_smallest;

/// Number of samples a fraction `alpha` of `n` selects, i.e. `⌊αn⌋`.
///
/// A relative slack of 1e-9 absorbs representation error in products such
/// as `0.29 * 100`, which evaluates just below 29.
pub fn fraction_count(alpha: f64, n: usize) -> usize {
    let raw = alpha * n as f64;
    (raw + 1e-9 * raw.abs().max(1.0)).floor().max(0.0) as usize
}

/// Monotone link applied to the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkFunction {
    Identity,
    /// `ω(u) = neg_slope·u` for `u < 0`, `pos_slope·u` otherwise.
    PiecewiseLinear { neg_slope: f64, pos_slope: f64 },
}

impl LinkFunction {
    pub fn piecewise(neg_slope: f64, pos_slope: f64) -> Result<Self> {
        let link = LinkFunction::PiecewiseLinear { neg_slope, pos_slope };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LinkFunction::Identity => Ok(()),
            LinkFunction::PiecewiseLinear { neg_slope, pos_slope } => {
                if neg_slope.is_finite() && pos_slope.is_finite() && neg_slope > 0.0 && pos_slope > 0.0
                {
                    Ok(())
                } else {
                    Err(Error::config(format!(
                        "piecewise link slopes must be finite and positive, got ({neg_slope}, {pos_slope})"
                    )))
                }
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, LinkFunction::Identity)
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            LinkFunction::Identity => u,
            LinkFunction::PiecewiseLinear { neg_slope, pos_slope } => {
                if u < 0.0 {
                    neg_slope * u
                } else {
                    pos_slope * u
                }
            }
        }
    }

    /// Derivative of the link. At the kink `u = 0` the positive-branch slope
    /// is returned.
    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match *self {
            LinkFunction::Identity => 1.0,
            LinkFunction::PiecewiseLinear { neg_slope, pos_slope } => {
                if u < 0.0 {
                    neg_slope
                } else {
                    pos_slope
                }
            }
        }
    }

    /// Bounds `[a, b]` on the derivative over the whole real line.
    pub fn derivative_bounds(&self) -> (f64, f64) {
        match *self {
            LinkFunction::Identity => (1.0, 1.0),
            LinkFunction::PiecewiseLinear { neg_slope, pos_slope } => {
                (neg_slope.min(pos_slope), neg_slope.max(pos_slope))
            }
        }
    }
}

/// Model parameter `θ`; every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter(DVector<f64>);

impl Parameter {
    pub fn new(theta: DVector<f64>) -> Result<Self> {
        if theta.iter().all(|v| v.is_finite()) {
            Ok(Parameter(theta))
        } else {
            Err(Error::Diverged)
        }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn zeros(d: usize) -> Self {
        Parameter(DVector::zeros(d))
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    /// Euclidean distance to another vector of the same length.
    pub fn distance(&self, other: &DVector<f64>) -> f64 {
        (&self.0 - other).norm()
    }
}

impl Deref for Parameter {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Ground-truth metadata attached to synthetic data.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    /// `theta_star[0]` is the clean model; further entries are mixture
    /// components.
    pub theta_star: Vec<DVector<f64>>,
    pub clean_mask: Vec<bool>,
    /// Generating component for each row, `None` for corrupted rows that
    /// do not come from any listed model.
    pub component_id: Vec<Option<usize>>,
}

impl Truth {
    pub fn clean_indices(&self) -> Vec<usize> {
        self.clean_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| c.then_some(i))
            .collect()
    }

    pub fn n_clean(&self) -> usize {
        self.clean_mask.iter().filter(|&&c| c).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    responses: DVector<f64>,
    link: LinkFunction,
    truth: Option<Truth>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, responses: DVector<f64>, link: LinkFunction) -> Result<Self> {
        let (n, d) = features.shape();
        if n == 0 || d == 0 {
            return Err(Error::config(format!("dataset must be non-empty, got {n}x{d}")));
        }
        if responses.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: responses.len() });
        }
        link.validate()?;
        Ok(Dataset { features, responses, link, truth: None })
    }

    /// Builds a dataset from row-major feature rows.
    pub fn from_rows(rows: &[Vec<f64>], responses: &[f64], link: LinkFunction) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, actual: bad.len() });
        }
        let features = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(features, DVector::from_column_slice(responses), link)
    }

    pub fn with_truth(mut self, truth: Truth) -> Result<Self> {
        let (n, d) = self.features.shape();
        if truth.clean_mask.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: truth.clean_mask.len() });
        }
        if truth.component_id.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: truth.component_id.len() });
        }
        if truth.theta_star.is_empty() {
            return Err(Error::config("truth must list at least one model"));
        }
        if let Some(t) = truth.theta_star.iter().find(|t| t.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, actual: t.len() });
        }
        let m = truth.theta_star.len();
        if let Some(j) = truth.component_id.iter().flatten().find(|&&j| j >= m) {
            return Err(Error::config(format!("component id {j} does not index one of {m} models")));
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn link(&self) -> LinkFunction {
        self.link
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }

    pub(crate) fn check_theta(&self, theta: &Parameter) -> Result<()> {
        if theta.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), actual: theta.len() });
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::IndexOutOfRange { index: i, n: self.n() });
        }
        Ok(())
    }

    pub(crate) fn check_subset(&self, subset: &[usize]) -> Result<()> {
        subset.iter().try_for_each(|&i| self.check_index(i))
    }

    #[inline]
    pub(crate) fn linear_predictor(&self, theta: &DVector<f64>, i: usize) -> f64 {
        self.features.row(i).transpose().dot(theta)
    }

    /// Adds `∇f_θ(sᵢ)` into `acc`. Unchecked.
    #[inline]
    pub(crate) fn accumulate_gradient(&self, theta: &DVector<f64>, i: usize, acc: &mut DVector<f64>) {
        let u = self.linear_predictor(theta, i);
        let scale = -2.0 * (self.responses[i] - self.link.value(u)) * self.link.derivative(u);
        if scale != 0.0 {
            for (j, a) in acc.iter_mut().enumerate() {
                *a += scale * self.features[(i, j)];
            }
        }
    }
}

/// `ω(φ(xᵢ)ᵀθ)`.
pub fn predict(theta: &Parameter, dataset: &Dataset, i: usize) -> Result<f64> {
    dataset.check_theta(theta)?;
    dataset.check_index(i)?;
    Ok(dataset.link.value(dataset.linear_predictor(theta, i)))
}

/// Squared loss `(yᵢ − ω(φ(xᵢ)ᵀθ))²`.
pub fn sample_loss(theta: &Parameter, dataset: &Dataset, i: usize) -> Result<f64> {
    let prediction = predict(theta, dataset, i)?;
    let r = dataset.responses[i] - prediction;
    Ok(r * r)
}

/// Analytic gradient `−2(y − ω(u))·ω′(u)·φ(x)` with `u = φ(x)ᵀθ`.
pub fn loss_gradient(theta: &Parameter, dataset: &Dataset, i: usize) -> Result<DVector<f64>> {
    dataset.check_theta(theta)?;
    dataset.check_index(i)?;
    let mut grad = DVector::zeros(dataset.d());
    dataset.accumulate_gradient(theta, i, &mut grad);
    Ok(grad)
}

/// Loss of every sample at `θ`, computed with one matrix-vector product.
pub fn all_losses(theta: &Parameter, dataset: &Dataset) -> Result<Vec<f64>> {
    dataset.check_theta(theta)?;
    let predictor = &dataset.features * &theta.0;
    Ok(predictor
        .iter()
        .zip(dataset.responses.iter())
        .map(|(&u, &y)| {
            let r = y - dataset.link.value(u);
            r * r
        })
        .collect())
}

/// Sum of sample losses over `subset`, accumulated in the order given.
pub fn subset_loss(theta: &Parameter, dataset: &Dataset, subset: &[usize]) -> Result<f64> {
    dataset.check_theta(theta)?;
    dataset.check_subset(subset)?;
    Ok(subset
        .iter()
        .map(|&i| {
            let r = dataset.responses[i] - dataset.link.value(dataset.linear_predictor(theta, i));
            r * r
        })
        .sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimmedLoss {
    pub value: f64,
    /// Ascending sample indices of the `⌊αn⌋` lowest losses.
    pub subset: Vec<usize>,
}

/// Sum of the `⌊αn⌋` smallest sample losses at a fixed `θ`.
pub fn trimmed_loss(theta: &Parameter, dataset: &Dataset, alpha: f64) -> Result<TrimmedLoss> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let n = dataset.n();
    let k = fraction_count(alpha, n);
    if k == 0 {
        return Err(Error::SelectionSize { k, n });
    }
    let losses = all_losses(theta, dataset)?;
    trimmed_from_losses(&losses, k)
}

pub(crate) fn trimmed_from_losses(losses: &[f64], k: usize) -> Result<TrimmedLoss> {
    let subset = select_k_smallest(losses, k)?;
    let value = subset.iter().map(|&i| losses[i]).sum();
    Ok(TrimmedLoss { value, subset })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(phis: &[f64], ys: &[f64], link: LinkFunction) -> Dataset {
        let rows: Vec<Vec<f64>> = phis.iter().map(|&p| vec![p]).collect();
        Dataset::from_rows(&rows, ys, link).unwrap()
    }

    fn theta(v: &[f64]) -> Parameter {
        Parameter::from_slice(v).unwrap()
    }

    fn kinked() -> LinkFunction {
        LinkFunction::piecewise(1.0, 1.2).unwrap()
    }

    #[test]
    fn predict_examples() {
        let d = one_dim(&[3.0], &[0.0], LinkFunction::Identity);
        assert_eq!(predict(&theta(&[2.0]), &d, 0).unwrap(), 6.0);

        let d = one_dim(&[-2.0], &[0.0], kinked());
        assert_eq!(predict(&theta(&[1.0]), &d, 0).unwrap(), -2.0);

        let d = one_dim(&[2.0], &[0.0], kinked());
        assert_eq!(predict(&theta(&[1.0]), &d, 0).unwrap(), 2.4);
    }

    #[test]
    fn predict_rejects_bad_index_and_dimension() {
        let d = one_dim(&[1.0, 2.0], &[0.0, 0.0], LinkFunction::Identity);
        assert!(matches!(predict(&theta(&[1.0]), &d, 2), Err(Error::IndexOutOfRange { index: 2, n: 2 })));
        assert!(matches!(
            predict(&theta(&[1.0, 1.0]), &d, 0),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
        assert!(sample_loss(&theta(&[1.0]), &d, 5).is_err());
    }

    #[test]
    fn sample_loss_examples() {
        let d = one_dim(&[3.0], &[6.0], LinkFunction::Identity);
        assert_eq!(sample_loss(&theta(&[2.0]), &d, 0).unwrap(), 0.0);

        let d = one_dim(&[1.0], &[3.0], LinkFunction::Identity);
        assert_eq!(sample_loss(&theta(&[0.0]), &d, 0).unwrap(), 9.0);

        let d = Dataset::from_rows(&[vec![1.0, 2.0]], &[0.0], LinkFunction::Identity).unwrap();
        assert_eq!(sample_loss(&theta(&[1.0, 1.0]), &d, 0).unwrap(), 9.0);
    }

    #[test]
    fn gradient_examples() {
        let d = one_dim(&[1.0], &[1.0], LinkFunction::Identity);
        assert_eq!(loss_gradient(&theta(&[0.0]), &d, 0).unwrap().as_slice(), &[-2.0]);

        let d = one_dim(&[3.0], &[6.0], LinkFunction::Identity);
        assert_eq!(loss_gradient(&theta(&[2.0]), &d, 0).unwrap().as_slice(), &[0.0]);
    }

    #[test]
    fn gradient_on_positive_branch_matches_hand_value_and_finite_difference() {
        // −2(0 − 1.2)·1.2·1 = 2.88
        let d = one_dim(&[1.0], &[0.0], kinked());
        let g = loss_gradient(&theta(&[1.0]), &d, 0).unwrap()[0];
        assert!((g - 2.88).abs() < 1e-12, "{g}");

        let h = 1e-6;
        let fd = (sample_loss(&theta(&[1.0 + h]), &d, 0).unwrap()
            - sample_loss(&theta(&[1.0 - h]), &d, 0).unwrap())
            / (2.0 * h);
        assert!((fd - g).abs() / g < 1e-6, "{fd}");
    }

    #[test]
    fn kink_derivative_is_positive_slope() {
        let link = kinked();
        assert_eq!(link.derivative(0.0), 1.2);
        assert_eq!(link.derivative(-1e-300), 1.0);
        assert_eq!(link.derivative_bounds(), (1.0, 1.2));
        assert_eq!(LinkFunction::Identity.derivative_bounds(), (1.0, 1.0));
        assert!(LinkFunction::piecewise(0.0, 1.0).is_err());
        assert!(LinkFunction::piecewise(1.0, f64::NAN).is_err());
    }

    #[test]
    fn trimmed_loss_examples() {
        let d = one_dim(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], LinkFunction::Identity);
        let t = trimmed_loss(&theta(&[0.0]), &d, 2.0 / 3.0).unwrap();
        assert_eq!(t.value, 5.0);
        assert_eq!(t.subset, vec![0, 1]);

        let t = trimmed_loss(&theta(&[0.0]), &d, 1.0).unwrap();
        assert_eq!(t.value, 14.0);
        assert_eq!(t.subset, vec![0, 1, 2]);

        let d = one_dim(&[1.0; 5], &[0.0, 0.0, 0.0, 10.0, 10.0], LinkFunction::Identity);
        let t = trimmed_loss(&theta(&[0.0]), &d, 0.6).unwrap();
        assert_eq!(t.value, 0.0);
        assert_eq!(t.subset, vec![0, 1, 2]);
    }

    #[test]
    fn trimmed_loss_rejects_empty_selection() {
        let d = one_dim(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], LinkFunction::Identity);
        assert!(matches!(trimmed_loss(&theta(&[0.0]), &d, 0.2), Err(Error::SelectionSize { k: 0, n: 3 })));
        assert!(trimmed_loss(&theta(&[0.0]), &d, 0.0).is_err());
        assert!(trimmed_loss(&theta(&[0.0]), &d, 1.5).is_err());
    }

    #[test]
    fn fraction_count_is_floor() {
        assert_eq!(fraction_count(0.29, 100), 29);
        assert_eq!(fraction_count(0.7, 1000), 700);
        assert_eq!(fraction_count(0.6, 5), 3);
        assert_eq!(fraction_count(0.75, 1000), 750);
        assert_eq!(fraction_count(0.999, 10), 9);
        assert_eq!(fraction_count(0.05, 10), 0);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::from_rows(&[vec![1.0], vec![1.0, 2.0]], &[0.0, 0.0], LinkFunction::Identity).is_err());
        assert!(Dataset::from_rows(&[vec![1.0]], &[0.0, 1.0], LinkFunction::Identity).is_err());
        let d = one_dim(&[1.0, 2.0], &[0.0, 0.0], LinkFunction::Identity);
        let bad = Truth {
            theta_star: vec![DVector::from_element(1, 1.0)],
            clean_mask: vec![true, false],
            component_id: vec![Some(0), Some(3)],
        };
        assert!(d.clone().with_truth(bad).is_err());
        let good = Truth {
            theta_star: vec![DVector::from_element(1, 1.0)],
            clean_mask: vec![true, false],
            component_id: vec![Some(0), None],
        };
        let d = d.with_truth(good).unwrap();
        assert_eq!(d.truth().unwrap().clean_indices(), vec![0]);
    }
}

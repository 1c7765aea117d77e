//! Model updates on a selected subset: closed-form least squares, batch SGD,
//! and a single full-gradient step.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::glm::{Dataset, Parameter};

/// Smallest accepted `σ_min/σ_max` of the selected-row Gram matrix.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SgdParams {
    /// Step size `η`.
    pub eta: f64,
    /// Number of gradient steps `M`.
    pub steps: usize,
    /// Batch size `N`.
    pub batch: usize,
    /// Draw a fresh starting point instead of continuing from the input.
    pub reinit: bool,
    /// Standard deviation of each coordinate of the fresh starting point.
    pub reinit_scale: f64,
}

impl SgdParams {
    pub fn new(eta: f64, steps: usize, batch: usize) -> Self {
        SgdParams { eta, steps, batch, reinit: false, reinit_scale: 1.0 }
    }

    fn validate(&self, subset_len: Option<usize>) -> Result<()> {
        check_eta(self.eta)?;
        if self.steps == 0 {
            return Err(Error::config("number of gradient steps must be at least 1"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if !(self.reinit_scale > 0.0 && self.reinit_scale.is_finite()) {
            return Err(Error::config(format!("reinit scale must be positive, got {}", self.reinit_scale)));
        }
        if let Some(len) = subset_len {
            if self.batch > len {
                return Err(Error::config(format!(
                    "batch size {} exceeds the {len} selected samples",
                    self.batch
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum UpdateMode {
    ClosedForm,
    BatchSgd(SgdParams),
    FullGradient { eta: f64 },
}

/// How `θ` is refit on each round's selected subset.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePolicy {
    pub mode: UpdateMode,
    /// Per-round override of the SGD step count `M`.
    pub schedule: BTreeMap<usize, usize>,
}

impl UpdatePolicy {
    pub fn closed_form() -> Self {
        UpdatePolicy { mode: UpdateMode::ClosedForm, schedule: BTreeMap::new() }
    }

    pub fn full_gradient(eta: f64) -> Self {
        UpdatePolicy { mode: UpdateMode::FullGradient { eta }, schedule: BTreeMap::new() }
    }

    pub fn batch_sgd(params: SgdParams) -> Self {
        UpdatePolicy { mode: UpdateMode::BatchSgd(params), schedule: BTreeMap::new() }
    }

    pub fn with_schedule(mut self, round: usize, steps: usize) -> Self {
        self.schedule.insert(round, steps);
        self
    }

    pub fn validate(&self, subset_len: Option<usize>) -> Result<()> {
        match &self.mode {
            UpdateMode::ClosedForm => {}
            UpdateMode::FullGradient { eta } => check_eta(*eta)?,
            UpdateMode::BatchSgd(p) => p.validate(subset_len)?,
        }
        if self.schedule.values().any(|&m| m == 0) {
            return Err(Error::config("scheduled step counts must be at least 1"));
        }
        Ok(())
    }

    /// Runs the update on `subset`. `round` selects a schedule override; the
    /// initial fit passes `None`.
    pub fn update<R: Rng + ?Sized>(
        &self,
        theta: &Parameter,
        dataset: &Dataset,
        subset: &[usize],
        round: Option<usize>,
        rng: &mut R,
    ) -> Result<Parameter> {
        match &self.mode {
            UpdateMode::ClosedForm => closed_form_ls(dataset, subset),
            UpdateMode::FullGradient { eta } => full_gradient_step(theta, dataset, subset, *eta),
            UpdateMode::BatchSgd(params) => {
                let steps = round
                    .and_then(|t| self.schedule.get(&t).copied())
                    .unwrap_or(params.steps);
                let params = SgdParams { steps, ..params.clone() };
                batch_sgd_update(theta, dataset, subset, &params, rng)
            }
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("step size must be positive, got {eta}")))
    }
}

/// Least-squares fit on the rows in `subset`, via Householder QR.
///
/// Identity link only. Rejects the subset when the Gram matrix of the
/// selected rows has `σ_min/σ_max` below [`RANK_TOLERANCE`].
pub fn closed_form_ls(dataset: &Dataset, subset: &[usize]) -> Result<Parameter> {
    if !dataset.link().is_identity() {
        return Err(Error::NonIdentityLink);
    }
    let d = dataset.d();
    if subset.len() < d {
        return Err(Error::SubsetTooSmall { size: subset.len(), d });
    }
    dataset.check_subset(subset)?;

    let rows = dataset.features().select_rows(subset.iter());
    let mut rhs = DVector::from_iterator(subset.len(), subset.iter().map(|&i| dataset.responses()[i]));
    let qr = rows.qr();
    let r = qr.r();

    // Singular values of R are those of the selected rows; the Gram matrix
    // squares them.
    let sv = r.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    let ratio = if smax > 0.0 { (smin / smax).powi(2) } else { 0.0 };
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::RankDeficient { ratio, tolerance: RANK_TOLERANCE });
    }

    qr.q_tr_mul(&mut rhs);
    let head = rhs.rows(0, d).into_owned();
    let theta = r.solve_upper_triangular(&head).ok_or(Error::RankDeficient { ratio, tolerance: RANK_TOLERANCE })?;
    Parameter::new(theta)
}

/// One step `θ − (η/|rows|)·Σ∇f_θ(sᵢ)`, summing in the order of `rows`.
fn gradient_step(theta: &DVector<f64>, dataset: &Dataset, rows: &[usize], eta: f64) -> DVector<f64> {
    let mut acc = DVector::zeros(dataset.d());
    for &i in rows {
        dataset.accumulate_gradient(theta, i, &mut acc);
    }
    theta - acc * (eta / rows.len() as f64)
}

/// Mini-batch SGD: `M` steps, each on `N` samples drawn uniformly without
/// replacement from `subset`.
pub fn batch_sgd_update<R: Rng + ?Sized>(
    theta: &Parameter,
    dataset: &Dataset,
    subset: &[usize],
    params: &SgdParams,
    rng: &mut R,
) -> Result<Parameter> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    params.validate(Some(subset.len()))?;
    dataset.check_theta(theta)?;
    dataset.check_subset(subset)?;

    let mut current: DVector<f64> = if params.reinit {
        DVector::from_fn(dataset.d(), |_, _| params.reinit_scale * rng.sample::<f64, _>(StandardNormal))
    } else {
        (**theta).clone()
    };
    let mut batch_rows = Vec::with_capacity(params.batch);
    for _ in 0..params.steps {
        let mut picks = rand::seq::index::sample(rng, subset.len(), params.batch).into_vec();
        // The batch is a set; summing in subset order makes N = |S| match a
        // full-gradient step bit for bit.
        picks.sort_unstable();
        batch_rows.clear();
        batch_rows.extend(picks.iter().map(|&p| subset[p]));
        current = gradient_step(&current, dataset, &batch_rows, params.eta);
        if !current.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged);
        }
    }
    Parameter::new(current)
}

/// A single deterministic gradient step over the whole subset.
pub fn full_gradient_step(theta: &Parameter, dataset: &Dataset, subset: &[usize], eta: f64) -> Result<Parameter> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    check_eta(eta)?;
    dataset.check_theta(theta)?;
    dataset.check_subset(subset)?;
    Parameter::new(gradient_step(theta, dataset, subset, eta))
}

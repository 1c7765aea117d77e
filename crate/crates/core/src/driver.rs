//! The ITLM alternation: select the lowest-loss subset, refit, repeat.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::glm::{all_losses, fraction_count, trimmed_from_losses, Dataset, Parameter};
use crate::rng::{stream, Purpose};
use crate::selection::selection_stats;
use crate::update::{UpdateMode, UpdatePolicy};

/// Starting point `θ₀`.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Run the update once on every sample. Gradient-based updates start that
    /// fit from the zero vector.
    FitAll,
    Zero,
    /// Spherical Gaussian with the given per-coordinate standard deviation.
    Random { scale: f64 },
    Given(Parameter),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItlmConfig {
    /// Fraction of samples kept each round.
    pub alpha: f64,
    /// Number of rounds `T`.
    pub rounds: usize,
    pub init: Init,
    pub update: UpdatePolicy,
    pub seed: u64,
}

impl ItlmConfig {
    /// Config with the default initialization for the update mode: a fit on
    /// all samples for closed-form and full-gradient updates, a random start
    /// for batch SGD.
    pub fn new(alpha: f64, rounds: usize, update: UpdatePolicy, seed: u64) -> Self {
        let init = match update.mode {
            UpdateMode::BatchSgd(_) => Init::Random { scale: 1.0 },
            UpdateMode::ClosedForm | UpdateMode::FullGradient { .. } => Init::FitAll,
        };
        ItlmConfig { alpha, rounds, init, update, seed }
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    /// Checks the config against a dataset and returns the subset size `⌊αn⌋`.
    pub fn validate(&self, dataset: &Dataset) -> Result<usize> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        let n = dataset.n();
        let k = fraction_count(self.alpha, n);
        if k == 0 {
            return Err(Error::SelectionSize { k, n });
        }
        if self.rounds == 0 {
            return Err(Error::config("number of rounds must be at least 1"));
        }
        self.update.validate(Some(k))?;
        if self.update.mode == UpdateMode::ClosedForm {
            if !dataset.link().is_identity() {
                return Err(Error::NonIdentityLink);
            }
            if k < dataset.d() {
                return Err(Error::SubsetTooSmall { size: k, d: dataset.d() });
            }
        }
        match &self.init {
            Init::Random { scale } if !(*scale > 0.0 && scale.is_finite()) => {
                return Err(Error::config(format!("random init scale must be positive, got {scale}")));
            }
            Init::Given(theta) => dataset.check_theta(theta)?,
            _ => {}
        }
        Ok(k)
    }
}

/// State at round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub theta: Parameter,
    /// `Sₜ`, absent for the final round `T`.
    pub selected: Option<Vec<usize>>,
    /// Sum of the `⌊αn⌋` smallest losses at `θₜ`.
    pub trimmed_loss: f64,
    /// `‖θₜ − θ*‖₂`, when ground truth is known.
    pub recovery_error: Option<f64>,
    /// `|Sₜ \ S*|`, when ground truth is known.
    pub contamination: Option<usize>,
    pub clean_recovery_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTrace {
    pub alpha: f64,
    /// Subset size `⌊αn⌋`.
    pub k: usize,
    /// Rounds `0..=T`.
    pub rounds: Vec<RoundRecord>,
}

impl EstimationTrace {
    pub fn final_theta(&self) -> Option<&Parameter> {
        self.rounds.last().map(|r| &r.theta)
    }

    pub fn final_recovery_error(&self) -> Option<f64> {
        self.rounds.last().and_then(|r| r.recovery_error)
    }

    pub fn recovery_errors(&self) -> Vec<f64> {
        self.rounds.iter().filter_map(|r| r.recovery_error).collect()
    }

    /// The last subset used for an update, `S_{T−1}`.
    pub fn last_selected(&self) -> Option<&RoundRecord> {
        self.rounds.iter().rev().find(|r| r.selected.is_some())
    }
}

/// A failed run, with every round completed before the failure.
#[derive(Debug, thiserror::Error)]
#[error("ITLM aborted after {} recorded rounds: {error}", partial.rounds.len())]
pub struct RunError {
    #[source]
    pub error: Error,
    pub partial: Box<EstimationTrace>,
}

impl From<RunError> for Error {
    fn from(e: RunError) -> Self {
        e.error
    }
}

pub fn run_itlm(dataset: &Dataset, config: &ItlmConfig) -> std::result::Result<EstimationTrace, RunError> {
    let mut trace = EstimationTrace { alpha: config.alpha, k: 0, rounds: Vec::with_capacity(config.rounds + 1) };
    match drive(dataset, config, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunError { error, partial: Box::new(trace) }),
    }
}

fn drive(dataset: &Dataset, config: &ItlmConfig, trace: &mut EstimationTrace) -> Result<()> {
    let k = config.validate(dataset)?;
    trace.k = k;
    let mut rng = stream(config.seed, Purpose::Algorithm);
    let d = dataset.d();

    let mut theta = match &config.init {
        Init::Zero => Parameter::zeros(d),
        Init::Given(theta) => theta.clone(),
        Init::Random { scale } => {
            Parameter::new(DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal)))?
        }
        Init::FitAll => {
            let all: Vec<usize> = (0..dataset.n()).collect();
            config.update.update(&Parameter::zeros(d), dataset, &all, None, &mut rng)?
        }
    };

    for t in 0..=config.rounds {
        let losses = all_losses(&theta, dataset)?;
        let trimmed = trimmed_from_losses(&losses, k)?;
        let mut record = RoundRecord {
            round: t,
            theta: theta.clone(),
            selected: None,
            trimmed_loss: trimmed.value,
            recovery_error: None,
            contamination: None,
            clean_recovery_ratio: None,
        };
        if let Some(truth) = dataset.truth() {
            record.recovery_error = Some(theta.distance(&truth.theta_star[0]));
            if t < config.rounds {
                let stats = selection_stats(&trimmed.subset, &truth.clean_mask)?;
                record.contamination = Some(stats.n_bad_selected);
                record.clean_recovery_ratio = Some(stats.clean_recovery_ratio);
            }
        }
        if t == config.rounds {
            trace.rounds.push(record);
            break;
        }
        record.selected = Some(trimmed.subset);
        trace.rounds.push(record);
        let selected = trace.rounds[t].selected.as_deref().expect("recorded above");
        theta = config.update.update(&theta, dataset, selected, Some(t), &mut rng)?;
    }
    Ok(())
}

/// True when `θ` moved by at most `tol` over the last round, or the selected
/// subset did not change between the last two selections.
pub fn stopping_check(trace: &EstimationTrace, tol: f64) -> bool {
    let n = trace.rounds.len();
    if n < 2 {
        return false;
    }
    let (prev, last) = (&trace.rounds[n - 2], &trace.rounds[n - 1]);
    if last.theta.distance(&prev.theta) <= tol {
        return true;
    }
    let mut sets = trace.rounds.iter().rev().filter_map(|r| r.selected.as_ref());
    matches!((sets.next(), sets.next()), (Some(a), Some(b)) if a == b)
}

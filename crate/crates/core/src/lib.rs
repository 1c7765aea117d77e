//! Iterative trimmed loss minimization (ITLM) for generalized linear models
//! whose training responses are partly corrupted.
//!
//! Each round selects the `⌊αn⌋` samples with the smallest loss under the
//! current parameter and refits the model on that subset. The crate also
//! ships exhaustive oracles for tiny instances, seeded synthetic data
//! generators, and the sweep harness behind the `itlm` CLI.

// `!(x > 0.0)` style checks deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod glm;
pub mod hexfloat;
pub mod io;
pub mod oracle;
pub mod params;
pub mod rng;
pub mod selection;
pub mod stats;
pub mod update;

pub use datagen::{generate, generate_mixture, ComponentSpec, CorruptionModel, GenConfig, ThetaStar};
pub use driver::{run_itlm, stopping_check, EstimationTrace, Init, ItlmConfig, RoundRecord, RunError};
pub use error::{Error, ErrorKind, Result};
pub use glm::{
    all_losses, fraction_count, loss_gradient, predict, sample_loss, subset_loss, trimmed_loss, Dataset,
    LinkFunction, Parameter, TrimmedLoss, Truth,
};
pub use oracle::{contamination_profile, exact_trimmed_loss, regularity_constants, ExactTrimmed, RegularityReport};
pub use selection::{select_k_smallest, selection_stats, SelectionStats};
pub use update::{batch_sgd_update, closed_form_ls, full_gradient_step, SgdParams, UpdateMode, UpdatePolicy};

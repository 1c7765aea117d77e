//! Monte Carlo sweeps over synthetic data, and the CSV tables they emit.
//!
//! A sweep is a grid of parameter settings crossed with `repeats` seeded
//! runs. Run `r` of grid point `g` uses [`run_seed`]`(seed, g, r)` for both
//! its data and its algorithm streams, so any single row of a table can be
//! regenerated on its own. Runs execute in parallel; results are collected in
//! grid-then-repeat order, so tables do not depend on scheduling.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::datagen::{generate, CorruptionModel, GenConfig};
use crate::driver::{run_itlm, EstimationTrace, Init, ItlmConfig};
use crate::error::{Error, Result};
use crate::glm::{Dataset, Parameter};
use crate::params;
use crate::rng::{run_seed, stream, Purpose, SEED_RULE_VERSION};
use crate::stats;
use crate::update::{closed_form_ls, UpdatePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    /// Final error against sample size and noise level.
    Inconsistency,
    /// Final error against the clean fraction.
    RecoveryVsAlphaStar,
    /// Final error when `α` underestimates `α*` by different margins.
    Misspecification,
    /// Per-round error for several update policies.
    Convergence,
    /// Per-round error under a non-identity link.
    Nonlinear,
    /// Recovery of one mixture component from a perturbed start.
    MixtureLocal,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Inconsistency,
        Experiment::RecoveryVsAlphaStar,
        Experiment::Misspecification,
        Experiment::Convergence,
        Experiment::Nonlinear,
        Experiment::MixtureLocal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Inconsistency => "inconsistency",
            Experiment::RecoveryVsAlphaStar => "recovery_vs_alpha_star",
            Experiment::Misspecification => "misspecification",
            Experiment::Convergence => "convergence",
            Experiment::Nonlinear => "nonlinear",
            Experiment::MixtureLocal => "mixture_local",
        }
    }

    fn per_round(self) -> bool {
        matches!(self, Experiment::Convergence | Experiment::Nonlinear)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment '{s}'")))
    }
}

/// A parameter a sweep grid can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridParam {
    N,
    D,
    AlphaStar,
    Sigma,
    Alpha,
    DeltaAlpha,
    Rounds,
    /// Distance of the starting point from the target component.
    Rho,
}

impl GridParam {
    const ALL: [GridParam; 8] = [
        GridParam::N,
        GridParam::D,
        GridParam::AlphaStar,
        GridParam::Sigma,
        GridParam::Alpha,
        GridParam::DeltaAlpha,
        GridParam::Rounds,
        GridParam::Rho,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GridParam::N => "n",
            GridParam::D => "d",
            GridParam::AlphaStar => "alpha_star",
            GridParam::Sigma => "sigma",
            GridParam::Alpha => "alpha",
            GridParam::DeltaAlpha => "delta_alpha",
            GridParam::Rounds => "rounds",
            GridParam::Rho => "rho",
        }
    }

    fn is_count(self) -> bool {
        matches!(self, GridParam::N | GridParam::D | GridParam::Rounds)
    }
}

impl FromStr for GridParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().replace('-', "_");
        GridParam::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::config(format!("unknown grid parameter '{s}'")))
    }
}

/// Cartesian product of value lists. The first axis varies slowest.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid {
    axes: Vec<(GridParam, Vec<f64>)>,
}

/// One setting of every grid axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint(Vec<(GridParam, f64)>);

impl GridPoint {
    pub fn get(&self, param: GridParam) -> Option<f64> {
        self.0.iter().find(|(p, _)| *p == param).map(|(_, v)| *v)
    }
}

impl Grid {
    pub fn new() -> Self {
        Grid::default()
    }

    /// Adds an axis, replacing any earlier axis for the same parameter.
    pub fn axis(mut self, param: GridParam, values: &[f64]) -> Self {
        self.axes.retain(|(p, _)| *p != param);
        self.axes.push((param, values.to_vec()));
        self
    }

    pub fn has(&self, param: GridParam) -> bool {
        self.axes.iter().any(|(p, _)| *p == param)
    }

    /// Parses `n=1000,5000;sigma=0.1`. The empty string is the one-point grid.
    pub fn parse(s: &str) -> Result<Self> {
        let mut grid = Grid::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| Error::config(format!("grid axis '{part}' is not <param>=<values>")))?;
            let param: GridParam = name.parse()?;
            if grid.has(param) {
                return Err(Error::config(format!("grid axis '{}' given twice", param.name())));
            }
            let values = values
                .split(',')
                .map(|v| params::parse_vector(v).map(|x| x[0]))
                .collect::<Result<Vec<f64>>>()?;
            grid = grid.axis(param, &values);
        }
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (param, values) in &self.axes {
            if values.is_empty() {
                return Err(Error::config(format!("grid axis '{}' has no values", param.name())));
            }
            for &v in values {
                let ok = if param.is_count() { v >= 1.0 && v.fract() == 0.0 && v < 2f64.powi(52) } else { v.is_finite() };
                if !ok {
                    return Err(Error::config(format!("bad value {v} on grid axis '{}'", param.name())));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<GridPoint> {
        let mut points = vec![GridPoint(Vec::new())];
        for (param, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut next = p.0.clone();
                        next.push((*param, v));
                        GridPoint(next)
                    })
                })
                .collect();
        }
        points
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let axes: Vec<String> = self
            .axes
            .iter()
            .map(|(p, v)| format!("{}={}", p.name(), v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        f.write_str(&axes.join(";"))
    }
}

/// Everything that defines a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub grid: Grid,
    pub repeats: usize,
    /// Base data config; the grid overrides fields and the seed is per run.
    pub data: GenConfig,
    /// Base algorithm config; the grid overrides fields and the seed is per run.
    pub itlm: ItlmConfig,
    /// When set, `α = α_ref − Δα` unless the grid sets `alpha` itself. The
    /// reference `α_ref` is `α*`, or the target component's weight in
    /// [`Experiment::MixtureLocal`].
    pub delta_alpha: Option<f64>,
    /// Update policies compared by the per-round experiments. Empty means
    /// the policy in `itlm`.
    pub variants: Vec<UpdatePolicy>,
    /// Mixture component the perturbed start is centred on.
    pub mixture_target: usize,
    pub seed: u64,
}

/// Step size used by the default gradient variants.
pub const DEFAULT_ETA: f64 = 0.4;

impl SweepSpec {
    /// The default sweep for each experiment: `d = 100`, unit `θ*`,
    /// random-output corruption `r ~ N(0, 1)`, `α = α* − 0.05`, 100 repeats.
    pub fn defaults(experiment: Experiment) -> Self {
        let mut spec = SweepSpec {
            experiment,
            grid: Grid::new(),
            repeats: 100,
            data: GenConfig::random_output(1000, 100, 0.8, 0.2, 0),
            itlm: ItlmConfig::new(0.75, 10, UpdatePolicy::closed_form(), 0),
            delta_alpha: Some(0.05),
            variants: Vec::new(),
            mixture_target: 0,
            seed: 0,
        };
        match experiment {
            Experiment::Inconsistency => {
                spec.grid = Grid::new()
                    .axis(GridParam::Sigma, &[0.1, 1.0])
                    .axis(GridParam::N, &[1000.0, 2000.0, 5000.0, 10000.0, 25000.0]);
            }
            Experiment::RecoveryVsAlphaStar => {
                let grid: Vec<f64> = (0..8).map(|i| 0.6 + 0.05 * i as f64).collect();
                spec.grid = Grid::new().axis(GridParam::AlphaStar, &grid);
            }
            Experiment::Misspecification => {
                spec.grid = Grid::new()
                    .axis(GridParam::AlphaStar, &[0.6, 0.7, 0.8, 0.9])
                    .axis(GridParam::DeltaAlpha, &[0.05, 0.1, 0.15]);
            }
            Experiment::Convergence => {
                spec.grid = Grid::new().axis(GridParam::Sigma, &[0.01, 0.05, 0.1, 0.2]);
                spec.itlm.rounds = 30;
                spec.variants = vec![UpdatePolicy::closed_form(), UpdatePolicy::full_gradient(DEFAULT_ETA)];
            }
            Experiment::Nonlinear => {
                spec.grid = Grid::new().axis(GridParam::Sigma, &[0.01, 0.05, 0.1, 0.2]);
                spec.data.link = crate::glm::LinkFunction::piecewise(1.0, 1.2).expect("valid slopes");
                spec.itlm = ItlmConfig::new(0.75, 30, UpdatePolicy::full_gradient(DEFAULT_ETA), 0);
            }
            Experiment::MixtureLocal => {
                spec.data.alpha_star = 0.7;
                spec.data.sigma = 0.05;
                spec.data.corruption = CorruptionModel::two_component_mixture(0.7);
                spec.grid = Grid::new().axis(GridParam::Rho, &[0.0, 0.1, 0.3, 0.5, 0.7, 1.0]);
            }
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.repeats == 0 {
            return Err(Error::config("repeats must be at least 1"));
        }
        if self.grid.has(GridParam::Rho) && self.experiment != Experiment::MixtureLocal {
            return Err(Error::config("grid axis 'rho' only applies to the mixture_local experiment"));
        }
        if self.grid.has(GridParam::Alpha) && self.grid.has(GridParam::DeltaAlpha) {
            return Err(Error::config("the grid may set alpha or delta_alpha, not both"));
        }
        if let Some(delta) = self.delta_alpha {
            if !(delta.is_finite() && delta >= 0.0) {
                return Err(Error::config(format!("delta_alpha must be non-negative, got {delta}")));
            }
        }
        if self.experiment == Experiment::MixtureLocal {
            let CorruptionModel::Mixture { weights, .. } = &self.data.corruption else {
                return Err(Error::config("mixture_local needs mixture corruption"));
            };
            if self.mixture_target >= weights.len() {
                return Err(Error::config(format!(
                    "mixture target {} out of range for {} components",
                    self.mixture_target,
                    weights.len()
                )));
            }
        }
        for policy in &self.variants {
            policy.validate(None)?;
        }
        Ok(())
    }

    fn variants(&self) -> Vec<UpdatePolicy> {
        if self.experiment.per_round() && !self.variants.is_empty() {
            self.variants.clone()
        } else {
            vec![self.itlm.update.clone()]
        }
    }

    /// The full configuration as `key=value` pairs. The keys match the CLI
    /// options, so the list doubles as a config file for a rerun.
    pub fn describe(&self) -> Vec<(String, String)> {
        let update = params::UpdateFields::from_policy(&self.itlm.update);
        let mut kv: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("grid", self.grid.to_string()),
            ("repeats", self.repeats.to_string()),
            ("seed", self.seed.to_string()),
            ("n", self.data.n.to_string()),
            ("d", self.data.d.to_string()),
            ("alpha-star", self.data.alpha_star.to_string()),
            ("sigma", self.data.sigma.to_string()),
            ("link", crate::io::format_link(self.data.link)),
            ("corruption", params::format_corruption(&self.data.corruption)),
            ("theta-star", params::format_theta_star(&self.data.theta_star)),
            ("alpha", self.itlm.alpha.to_string()),
            ("delta-alpha", self.delta_alpha.map_or_else(|| "none".into(), |d| d.to_string())),
            ("rounds", self.itlm.rounds.to_string()),
            ("init", params::format_init(&self.itlm.init)),
            ("update", update.mode.clone()),
            ("eta", update.eta.to_string()),
            ("steps", update.steps.to_string()),
            ("batch", update.batch.to_string()),
            ("reinit", update.reinit.to_string()),
            ("reinit-scale", update.reinit_scale.to_string()),
            ("schedule", params::format_schedule(&update.schedule)),
        ];
        if self.experiment.per_round() {
            let names: Vec<String> = self.variants().iter().map(params::format_variant).collect();
            kv.push(("variants", names.join(",")));
        }
        if self.experiment == Experiment::MixtureLocal {
            kv.push(("mixture-target", self.mixture_target.to_string()));
        }
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Data and algorithm configs for grid point `point` with run seed `seed`.
    pub fn resolve(&self, point: &GridPoint, seed: u64) -> Result<(GenConfig, ItlmConfig)> {
        let mut data = self.data.clone();
        let mut itlm = self.itlm.clone();
        data.seed = seed;
        itlm.seed = seed;
        if let Some(n) = point.get(GridParam::N) {
            data.n = n as usize;
        }
        if let Some(d) = point.get(GridParam::D) {
            data.d = d as usize;
        }
        if let Some(sigma) = point.get(GridParam::Sigma) {
            data.sigma = sigma;
        }
        if let Some(rounds) = point.get(GridParam::Rounds) {
            itlm.rounds = rounds as usize;
        }
        if let Some(alpha_star) = point.get(GridParam::AlphaStar) {
            data.alpha_star = alpha_star;
            if let CorruptionModel::Mixture { weights, .. } = &mut data.corruption {
                rescale_weights(weights, alpha_star)?;
            }
        }
        let reference = match (&data.corruption, self.experiment) {
            (CorruptionModel::Mixture { weights, .. }, Experiment::MixtureLocal) => weights[self.mixture_target],
            _ => data.alpha_star,
        };
        if let Some(alpha) = point.get(GridParam::Alpha) {
            itlm.alpha = alpha;
        } else if let Some(delta) = point.get(GridParam::DeltaAlpha).or(self.delta_alpha) {
            itlm.alpha = reference - delta;
        }
        if !(itlm.alpha > 0.0 && itlm.alpha <= 1.0) {
            return Err(Error::config(format!("resolved alpha {} is outside (0, 1]", itlm.alpha)));
        }
        Ok((data, itlm))
    }
}

/// Sets the first mixture weight to `alpha_star` and scales the others to
/// fill the remainder in proportion.
fn rescale_weights(weights: &mut [f64], alpha_star: f64) -> Result<()> {
    let rest: f64 = weights[1..].iter().sum();
    if !(rest > 0.0) {
        return Err(Error::config("cannot rescale mixture weights with an empty remainder"));
    }
    let scale = (1.0 - alpha_star) / rest;
    weights[0] = alpha_star;
    for w in &mut weights[1..] {
        *w *= scale;
    }
    Ok(())
}

fn variant_name(policy: &UpdatePolicy) -> String {
    params::mode_name(&policy.mode).to_string()
}

/// Radius within which a per-round trace counts as having reached its
/// noise floor.
pub fn plateau_threshold(sigma: f64) -> f64 {
    (10.0 * sigma).max(1e-8)
}

/// Radius within which a mixture run counts as having found a component.
pub fn mixture_tolerance(sigma: f64) -> f64 {
    10.0 * sigma + 0.01
}

/// First round whose error is at most `threshold`.
pub fn rounds_to_plateau(errors: &[f64], threshold: f64) -> Option<usize> {
    errors.iter().position(|&e| e <= threshold)
}

/// A table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    /// Floats use 17 significant digits, enough to read back the same `f64`.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) | Cell::Empty => None,
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Written to the sidecar file by [`emit_csv`].
    pub metadata: Vec<(String, String)>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric view of one column; `None` for empty or text cells.
    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self.column_index(name).ok_or_else(|| Error::config(format!("no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[j].as_f64()).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(&self.columns)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::render))?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn write_metadata<W: Write>(&self, mut out: W) -> Result<()> {
        for (k, v) in &self.metadata {
            writeln!(out, "{k}={v}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `<path>.meta`.
pub fn metadata_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Writes `table` to `path` and its metadata to `<path>.meta`. A table
/// without rows still gets its header line.
pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    table.write_csv(BufWriter::new(File::create(path)?))?;
    table.write_metadata(BufWriter::new(File::create(metadata_path(path))?))
}

/// The two tables every sweep produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    /// One row per run (per run and round for per-round experiments).
    pub runs: Table,
    /// One row per grid point (and variant and round where applicable).
    pub summary: Table,
}

/// Runs the experiment named in `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    match spec.experiment {
        Experiment::Inconsistency | Experiment::RecoveryVsAlphaStar | Experiment::Misspecification => {
            final_error_sweep(spec)
        }
        Experiment::Convergence | Experiment::Nonlinear => convergence_curve(spec),
        Experiment::MixtureLocal => mixture_local_experiment(spec),
    }
}

fn metadata(spec: &SweepSpec, table: &str) -> Vec<(String, String)> {
    let mut kv = vec![
        ("table".to_string(), table.to_string()),
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("seed-rule".to_string(), SEED_RULE_VERSION.to_string()),
    ];
    kv.extend(spec.describe());
    kv
}

/// One resolved run: grid point `g`, repeat `r`.
struct Job {
    g: usize,
    r: usize,
    seed: u64,
    data: GenConfig,
    itlm: ItlmConfig,
    rho: f64,
}

fn jobs(spec: &SweepSpec) -> Result<Vec<Job>> {
    spec.validate()?;
    let mut jobs = Vec::with_capacity(spec.grid.len() * spec.repeats);
    for (g, point) in spec.grid.points().iter().enumerate() {
        for r in 0..spec.repeats {
            let seed = run_seed(spec.seed, g, r);
            let (data, itlm) = spec.resolve(point, seed)?;
            let rho = point.get(GridParam::Rho).unwrap_or(0.0);
            jobs.push(Job { g, r, seed, data, itlm, rho });
        }
    }
    Ok(jobs)
}

/// Setting columns shared by every table.
const SETTING_COLUMNS: [&str; 7] = ["grid_index", "n", "d", "alpha_star", "sigma", "alpha", "rounds"];

fn setting_cells(job: &Job) -> Vec<Cell> {
    vec![
        job.g.into(),
        job.data.n.into(),
        job.data.d.into(),
        job.data.alpha_star.into(),
        job.data.sigma.into(),
        job.itlm.alpha.into(),
        job.itlm.rounds.into(),
    ]
}

fn columns(extra: &[&'static str], with_run: bool) -> Vec<&'static str> {
    let mut cols = vec![SETTING_COLUMNS[0]];
    if with_run {
        cols.extend(["repeat", "seed"]);
    }
    cols.extend(&SETTING_COLUMNS[1..]);
    cols.extend(extra);
    cols
}

fn run_cells(job: &Job) -> Vec<Cell> {
    let mut cells = setting_cells(job);
    cells.splice(1..1, [job.r.into(), Cell::Text(job.seed.to_string())]);
    cells
}

/// Errors of the least-squares fit on the clean rows and on all rows, for
/// identity-link data.
fn baselines(dataset: &Dataset) -> Result<(Option<f64>, Option<f64>)> {
    let Some(truth) = dataset.truth() else {
        return Ok((None, None));
    };
    if !dataset.link().is_identity() {
        return Ok((None, None));
    }
    let target = &truth.theta_star[0];
    let clean = truth.clean_indices();
    let oracle = if clean.len() >= dataset.d() { Some(closed_form_ls(dataset, &clean)?.distance(target)) } else { None };
    let all: Vec<usize> = (0..dataset.n()).collect();
    let naive = if all.len() >= dataset.d() { Some(closed_form_ls(dataset, &all)?.distance(target)) } else { None };
    Ok((oracle, naive))
}

struct FinalOutcome {
    itlm_error: f64,
    oracle_error: Option<f64>,
    naive_error: Option<f64>,
    contamination: Option<usize>,
    clean_recovery_ratio: Option<f64>,
}

fn run_final(job: &Job) -> Result<FinalOutcome> {
    let dataset = generate(&job.data)?;
    let trace = run_itlm(&dataset, &job.itlm)?;
    let (oracle_error, naive_error) = baselines(&dataset)?;
    let last = trace.last_selected();
    Ok(FinalOutcome {
        itlm_error: trace.final_recovery_error().expect("generated data carries truth"),
        oracle_error,
        naive_error,
        contamination: last.and_then(|r| r.contamination),
        clean_recovery_ratio: last.and_then(|r| r.clean_recovery_ratio),
    })
}

fn final_error_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    let jobs = jobs(spec)?;
    let outcomes: Vec<FinalOutcome> = jobs.par_iter().map(run_final).collect::<Result<_>>()?;

    let mut runs = Table::new(&columns(
        &["itlm_error", "oracle_error", "naive_error", "contamination", "clean_recovery_ratio"],
        true,
    ));
    for (job, o) in jobs.iter().zip(&outcomes) {
        let mut row = run_cells(job);
        row.extend([
            o.itlm_error.into(),
            o.oracle_error.into(),
            o.naive_error.into(),
            o.contamination.into(),
            o.clean_recovery_ratio.into(),
        ]);
        runs.push(row);
    }
    runs.metadata = metadata(spec, "runs");

    let mut summary = Table::new(&columns(
        &[
            "runs",
            "itlm_mean",
            "itlm_std",
            "itlm_median",
            "itlm_q1",
            "itlm_q3",
            "oracle_median",
            "naive_median",
            "contamination_mean",
            "clean_recovery_mean",
        ],
        false,
    ));
    for (group, outs) in group_by_grid(&jobs, &outcomes, spec.repeats) {
        let itlm: Vec<f64> = outs.iter().map(|o| o.itlm_error).collect();
        let some = |f: &dyn Fn(&FinalOutcome) -> Option<f64>| -> Vec<f64> { outs.iter().filter_map(f).collect() };
        let optional = |v: Vec<f64>, agg: fn(&[f64]) -> f64| if v.is_empty() { Cell::Empty } else { agg(&v).into() };
        let mut row = setting_cells(group);
        row.extend([
            itlm.len().into(),
            stats::mean(&itlm).into(),
            stats::std_dev(&itlm).into(),
            stats::median(&itlm).into(),
            stats::quantile(&itlm, 0.25).into(),
            stats::quantile(&itlm, 0.75).into(),
            optional(some(&|o| o.oracle_error), stats::median),
            optional(some(&|o| o.naive_error), stats::median),
            optional(some(&|o| o.contamination.map(|c| c as f64)), stats::mean),
            optional(some(&|o| o.clean_recovery_ratio), stats::mean),
        ]);
        summary.push(row);
    }
    summary.metadata = metadata(spec, "summary");
    Ok(SweepOutput { runs, summary })
}

/// Pairs the first job of each grid point with that point's outcomes.
fn group_by_grid<'a, T>(jobs: &'a [Job], outcomes: &'a [T], repeats: usize) -> impl Iterator<Item = (&'a Job, &'a [T])> {
    jobs.chunks(repeats).zip(outcomes.chunks(repeats)).map(|(j, o)| (&j[0], o))
}

/// Per-round errors of every run and variant, with the median trace and
/// quartiles per round. The data of a run depends only on its grid point and
/// repeat, so all variants see the same datasets.
pub fn convergence_curve(spec: &SweepSpec) -> Result<SweepOutput> {
    let jobs = jobs(spec)?;
    let variants = spec.variants();
    let traces: Vec<Vec<EstimationTrace>> = jobs
        .par_iter()
        .map(|job| {
            let dataset = generate(&job.data)?;
            variants
                .iter()
                .map(|policy| {
                    let mut itlm = job.itlm.clone();
                    itlm.update = policy.clone();
                    run_itlm(&dataset, &itlm).map_err(Error::from)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut runs = Table::new(&columns(&["variant", "round", "error", "contamination", "plateau_round"], true));
    for (job, per_variant) in jobs.iter().zip(&traces) {
        let threshold = plateau_threshold(job.data.sigma);
        for (policy, trace) in variants.iter().zip(per_variant) {
            let errors = trace.recovery_errors();
            let plateau = rounds_to_plateau(&errors, threshold);
            for rec in &trace.rounds {
                let mut row = run_cells(job);
                row.extend([
                    Cell::Text(variant_name(policy)),
                    rec.round.into(),
                    rec.recovery_error.into(),
                    rec.contamination.into(),
                    plateau.into(),
                ]);
                runs.push(row);
            }
        }
    }
    runs.metadata = metadata(spec, "runs");

    let mut summary = Table::new(&columns(
        &[
            "variant",
            "round",
            "error_median",
            "error_q1",
            "error_q3",
            "error_mean",
            "ratio_median",
            "plateau_round_median",
            "plateau_fraction",
        ],
        false,
    ));
    for (group, group_traces) in group_by_grid(&jobs, &traces, spec.repeats) {
        let threshold = plateau_threshold(group.data.sigma);
        for (v, policy) in variants.iter().enumerate() {
            let errors: Vec<Vec<f64>> = group_traces.iter().map(|per| per[v].recovery_errors()).collect();
            let plateaus: Vec<f64> =
                errors.iter().filter_map(|e| rounds_to_plateau(e, threshold)).map(|t| t as f64).collect();
            let plateau_median = if plateaus.is_empty() { Cell::Empty } else { stats::median(&plateaus).into() };
            let plateau_fraction = plateaus.len() as f64 / errors.len() as f64;
            for t in 0..=group.itlm.rounds {
                let at: Vec<f64> = errors.iter().map(|e| e[t]).collect();
                let ratio = if t == 0 {
                    Cell::Empty
                } else {
                    let ratios: Vec<f64> = errors.iter().map(|e| e[t] / e[t - 1]).collect();
                    stats::median(&ratios).into()
                };
                let mut row = setting_cells(group);
                row.extend([
                    Cell::Text(variant_name(policy)),
                    t.into(),
                    stats::median(&at).into(),
                    stats::quantile(&at, 0.25).into(),
                    stats::quantile(&at, 0.75).into(),
                    stats::mean(&at).into(),
                    ratio,
                    plateau_median.clone(),
                    plateau_fraction.into(),
                ]);
                summary.push(row);
            }
        }
    }
    summary.metadata = metadata(spec, "summary");
    Ok(SweepOutput { runs, summary })
}

struct MixtureOutcome {
    target_error: f64,
    nearest: usize,
    nearest_distance: f64,
}

fn run_mixture(job: &Job, target: usize) -> Result<MixtureOutcome> {
    let dataset = generate(&job.data)?;
    let truth = dataset.truth().expect("generated data carries truth");
    let centre = &truth.theta_star[target];

    let mut rng = stream(job.seed, Purpose::Experiment);
    let direction = loop {
        let v = DVector::from_fn(job.data.d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 {
            break v / norm;
        }
    };
    let start = Parameter::new(centre + direction * job.rho)?;
    let itlm = job.itlm.clone().with_init(Init::Given(start));
    let trace = run_itlm(&dataset, &itlm)?;
    let theta = trace.final_theta().expect("at least one round");

    let distances: Vec<f64> = truth.theta_star.iter().map(|m| theta.distance(m)).collect();
    let nearest = (0..distances.len()).min_by(|&a, &b| distances[a].total_cmp(&distances[b])).expect("non-empty");
    Ok(MixtureOutcome { target_error: distances[target], nearest, nearest_distance: distances[nearest] })
}

/// Starts ITLM at `θ*_target + ρu`, `u` a random unit direction, and records
/// which component, if any, the final iterate lies within
/// [`mixture_tolerance`] of.
pub fn mixture_local_experiment(spec: &SweepSpec) -> Result<SweepOutput> {
    if spec.experiment != Experiment::MixtureLocal {
        return Err(Error::config("mixture_local_experiment needs a mixture_local spec"));
    }
    let jobs = jobs(spec)?;
    let target = spec.mixture_target;
    let outcomes: Vec<MixtureOutcome> = jobs.par_iter().map(|job| run_mixture(job, target)).collect::<Result<_>>()?;

    let mut runs = Table::new(&columns(
        &["rho", "target", "target_error", "nearest_component", "nearest_distance", "converged"],
        true,
    ));
    for (job, o) in jobs.iter().zip(&outcomes) {
        let tol = mixture_tolerance(job.data.sigma);
        let mut row = run_cells(job);
        row.extend([
            job.rho.into(),
            target.into(),
            o.target_error.into(),
            o.nearest.into(),
            o.nearest_distance.into(),
            usize::from(o.target_error <= tol).into(),
        ]);
        runs.push(row);
    }
    runs.metadata = metadata(spec, "runs");

    let mut summary = Table::new(&columns(
        &["rho", "runs", "converged_fraction", "other_component_fraction", "target_error_median"],
        false,
    ));
    for (group, outs) in group_by_grid(&jobs, &outcomes, spec.repeats) {
        let tol = mixture_tolerance(group.data.sigma);
        let count = |f: &dyn Fn(&MixtureOutcome) -> bool| outs.iter().filter(|o| f(o)).count() as f64 / outs.len() as f64;
        let errors: Vec<f64> = outs.iter().map(|o| o.target_error).collect();
        let mut row = setting_cells(group);
        row.extend([
            group.rho.into(),
            outs.len().into(),
            count(&|o| o.target_error <= tol).into(),
            count(&|o| o.nearest != target && o.nearest_distance <= tol).into(),
            stats::median(&errors).into(),
        ]);
        summary.push(row);
    }
    summary.metadata = metadata(spec, "summary");
    Ok(SweepOutput { runs, summary })
}

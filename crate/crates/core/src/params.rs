//! Text forms of configuration values, shared by the CLI, config files and
//! the metadata sidecars written next to every CSV.
//!
//! | value      | forms                                                        |
//! |------------|--------------------------------------------------------------|
//! | corruption | `none`, `constant:<c>`, `adversarial:<offset>[:<θ_adv>]`,     |
//! |            | `random:<std>`, `mixture:<w0>,<w1>,...`                      |
//! | theta-star | `unit` or a comma-separated vector                           |
//! | init       | `fit_all`, `zero`, `random:<scale>`, `given:<vector>`         |
//! | update     | `closed_form`, `full_gradient`, `batch_sgd`                  |
//! | schedule   | `<round>:<steps>,...`                                        |
//! | grid       | `<param>=<v>,<v>;<param>=<v>,...`                            |
//!
//! Vectors are comma-separated reals, decimal or hexadecimal.

use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::datagen::{ComponentSpec, CorruptionModel, ThetaStar};
use crate::driver::Init;
use crate::error::{Error, Result};
use crate::glm::Parameter;
use crate::hexfloat;
use crate::io::parse_real;
use crate::update::{SgdParams, UpdateMode, UpdatePolicy};

fn real(s: &str) -> Result<f64> {
    parse_real(s.trim()).map_err(Error::Config)
}

pub fn parse_vector(s: &str) -> Result<DVector<f64>> {
    let values = s.split(',').map(real).collect::<Result<Vec<f64>>>()?;
    Ok(DVector::from_vec(values))
}

/// Comma-separated hexadecimal literals, exact on re-parse.
pub fn format_vector(v: &DVector<f64>) -> String {
    v.iter().map(|x| hexfloat::format(*x)).collect::<Vec<_>>().join(",")
}

pub fn parse_corruption(s: &str) -> Result<CorruptionModel> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "none" if rest.is_empty() => Ok(CorruptionModel::None),
        "constant" => Ok(CorruptionModel::Constant { value: real(rest)? }),
        "random" => Ok(CorruptionModel::RandomOutput { std: real(rest)? }),
        "adversarial" => {
            let (offset, theta) = rest.split_once(':').unwrap_or((rest, ""));
            let theta_adv = if theta.is_empty() {
                ComponentSpec::RandomUnit
            } else {
                ComponentSpec::Given(parse_vector(theta)?)
            };
            Ok(CorruptionModel::AdversarialModel { theta_adv, offset: real(offset)? })
        }
        "mixture" => {
            let weights = rest.split(',').map(real).collect::<Result<Vec<f64>>>()?;
            if weights.len() < 2 {
                return Err(Error::config("a mixture needs at least two weights"));
            }
            let components = vec![ComponentSpec::OrthogonalUnit; weights.len() - 1];
            Ok(CorruptionModel::Mixture { components, weights })
        }
        _ => Err(Error::config(format!("unknown corruption '{s}'"))),
    }
}

pub fn format_corruption(c: &CorruptionModel) -> String {
    let num = |x: f64| format!("{x}");
    match c {
        CorruptionModel::None => "none".into(),
        CorruptionModel::Constant { value } => format!("constant:{}", num(*value)),
        CorruptionModel::RandomOutput { std } => format!("random:{}", num(*std)),
        CorruptionModel::AdversarialModel { theta_adv, offset } => match theta_adv {
            ComponentSpec::Given(v) => format!("adversarial:{}:{}", num(*offset), format_vector(v)),
            _ => format!("adversarial:{}", num(*offset)),
        },
        CorruptionModel::Mixture { components, weights } => {
            let w = weights.iter().map(|w| num(*w)).collect::<Vec<_>>().join(",");
            if components.iter().all(|c| *c == ComponentSpec::OrthogonalUnit) {
                format!("mixture:{w}")
            } else {
                format!("mixture:{w} (custom components)")
            }
        }
    }
}

pub fn parse_theta_star(s: &str) -> Result<ThetaStar> {
    if s == "unit" {
        Ok(ThetaStar::Unit)
    } else {
        parse_vector(s).map(ThetaStar::Given)
    }
}

pub fn format_theta_star(t: &ThetaStar) -> String {
    match t {
        ThetaStar::Unit => "unit".into(),
        ThetaStar::Given(v) => format_vector(v),
    }
}

pub fn parse_init(s: &str) -> Result<Init> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    match kind {
        "fit_all" if rest.is_empty() => Ok(Init::FitAll),
        "zero" if rest.is_empty() => Ok(Init::Zero),
        "random" => Ok(Init::Random { scale: if rest.is_empty() { 1.0 } else { real(rest)? } }),
        "given" => Ok(Init::Given(Parameter::new(parse_vector(rest)?)?)),
        _ => Err(Error::config(format!("unknown init '{s}'"))),
    }
}

pub fn format_init(init: &Init) -> String {
    match init {
        Init::FitAll => "fit_all".into(),
        Init::Zero => "zero".into(),
        Init::Random { scale } => format!("random:{scale}"),
        Init::Given(theta) => format!("given:{}", format_vector(theta)),
    }
}

pub fn parse_schedule(s: &str) -> Result<BTreeMap<usize, usize>> {
    let mut schedule = BTreeMap::new();
    for entry in s.split(',').map(str::trim).filter(|e| !e.is_empty()) {
        let (round, steps) = entry
            .split_once(':')
            .ok_or_else(|| Error::config(format!("schedule entry '{entry}' is not <round>:<steps>")))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| Error::config(format!("bad schedule entry '{entry}'")));
        schedule.insert(parse(round)?, parse(steps)?);
    }
    Ok(schedule)
}

pub fn format_schedule(schedule: &BTreeMap<usize, usize>) -> String {
    schedule.iter().map(|(r, m)| format!("{r}:{m}")).collect::<Vec<_>>().join(",")
}

/// Update-policy fields as they appear on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateFields {
    pub mode: String,
    pub eta: f64,
    pub steps: usize,
    pub batch: usize,
    pub reinit: bool,
    pub reinit_scale: f64,
    pub schedule: BTreeMap<usize, usize>,
}

impl Default for UpdateFields {
    fn default() -> Self {
        UpdateFields {
            mode: "closed_form".into(),
            eta: 0.3,
            steps: 1,
            batch: 1,
            reinit: false,
            reinit_scale: 1.0,
            schedule: BTreeMap::new(),
        }
    }
}

impl UpdateFields {
    pub fn build(&self) -> Result<UpdatePolicy> {
        self.build_mode(&self.mode)
    }

    /// Builds a policy for `mode` from the shared step-size fields.
    pub fn build_mode(&self, mode: &str) -> Result<UpdatePolicy> {
        let mode = match mode {
            "closed_form" => UpdateMode::ClosedForm,
            "full_gradient" => UpdateMode::FullGradient { eta: self.eta },
            "batch_sgd" => UpdateMode::BatchSgd(SgdParams {
                eta: self.eta,
                steps: self.steps,
                batch: self.batch,
                reinit: self.reinit,
                reinit_scale: self.reinit_scale,
            }),
            other => return Err(Error::config(format!("unknown update mode '{other}'"))),
        };
        let policy = UpdatePolicy { mode, schedule: self.schedule.clone() };
        policy.validate(None)?;
        Ok(policy)
    }

    pub fn from_policy(policy: &UpdatePolicy) -> Self {
        let base = UpdateFields { schedule: policy.schedule.clone(), ..Default::default() };
        match &policy.mode {
            UpdateMode::ClosedForm => base,
            UpdateMode::FullGradient { eta } => UpdateFields { mode: "full_gradient".into(), eta: *eta, ..base },
            UpdateMode::BatchSgd(p) => UpdateFields {
                mode: "batch_sgd".into(),
                eta: p.eta,
                steps: p.steps,
                batch: p.batch,
                reinit: p.reinit,
                reinit_scale: p.reinit_scale,
                ..base
            },
        }
    }
}

/// `closed_form`, or a gradient mode with its step size, e.g.
/// `full_gradient:0.4`.
pub fn format_variant(policy: &UpdatePolicy) -> String {
    match &policy.mode {
        UpdateMode::ClosedForm => "closed_form".into(),
        UpdateMode::FullGradient { eta } => format!("full_gradient:{eta}"),
        UpdateMode::BatchSgd(p) => format!("batch_sgd:{}", p.eta),
    }
}

/// Parses a comma-separated list of variants. A mode without a step size
/// takes it, and every other setting, from `fields`.
pub fn parse_variants(text: &str, fields: &UpdateFields) -> Result<Vec<UpdatePolicy>> {
    text.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| match v.split_once(':') {
            Some((mode, eta)) => {
                let eta = parse_real(eta).map_err(Error::Config)?;
                UpdateFields { eta, ..fields.clone() }.build_mode(mode)
            }
            None => fields.build_mode(v),
        })
        .collect()
}

pub fn mode_name(mode: &UpdateMode) -> &'static str {
    match mode {
        UpdateMode::ClosedForm => "closed_form",
        UpdateMode::FullGradient { .. } => "full_gradient",
        UpdateMode::BatchSgd(_) => "batch_sgd",
    }
}

/// Reads `key=value` lines. Blank lines and lines starting with `#` are
/// skipped; keys may be written with `-` or `_`.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(line, l)| {
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected key=value, got '{l}'") })?;
            Ok((k.trim().replace('_', "-"), v.trim().to_string()))
        })
        .collect()
}

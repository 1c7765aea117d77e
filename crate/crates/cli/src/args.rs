//! Command-line definitions and `--config` file injection.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use itlm::params::parse_key_values;
use itlm::Error;

/// Iterative trimmed loss minimization on synthetic or stored datasets.
///
/// Any option may also come from `--config <file>`, a text file of
/// `key=value` lines; options on the command line take precedence.
#[derive(Debug, Parser)]
#[command(name = "itlm", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Generate a synthetic dataset file.
    Generate(GenerateArgs),
    /// Run ITLM on a dataset file and write the per-round trace as CSV.
    Fit(FitArgs),
    /// Exhaustive oracles for tiny datasets.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Run a named Monte Carlo experiment.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Exact trimmed-loss estimator by subset enumeration.
    Exact(ExactArgs),
    /// Regularity constants ψ⁻(k), ψ⁺(k) of the dataset's features.
    Regularity(RegularityArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Fraction of clean rows.
    #[arg(long)]
    pub alpha_star: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// `identity` or `piecewise:<neg>:<pos>`.
    #[arg(long)]
    pub link: Option<String>,
    /// `none`, `constant:<c>`, `adversarial:<offset>[:<θ>]`, `random:<std>`
    /// or `mixture:<w0>,<w1>,...`.
    #[arg(long)]
    pub corruption: Option<String>,
    /// `unit` or a comma-separated vector.
    #[arg(long)]
    pub theta_star: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct AlgoArgs {
    /// Fraction of samples kept each round.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// `fit_all`, `zero`, `random:<scale>` or `given:<vector>`.
    #[arg(long)]
    pub init: Option<String>,
    /// `closed_form`, `full_gradient` or `batch_sgd`.
    #[arg(long)]
    pub update: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Gradient steps per round for batch SGD.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Re-initialize randomly before each round's SGD steps.
    #[arg(long)]
    pub reinit: Option<bool>,
    #[arg(long)]
    pub reinit_scale: Option<f64>,
    /// Per-round step overrides, `<round>:<steps>,...`.
    #[arg(long)]
    pub schedule: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset file to read.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub algo: AlgoArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    /// Largest number of rows to enumerate over.
    #[arg(long, default_value_t = itlm::oracle::DEFAULT_MAX_EXACT_N)]
    pub max_n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegularityArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Subset sizes, comma-separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<usize>,
    /// Largest number of subsets to enumerate per `k`.
    #[arg(long, default_value_t = itlm::oracle::DEFAULT_MAX_SUBSETS)]
    pub max_subsets: u128,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// inconsistency, recovery_vs_alpha_star, misspecification, convergence,
    /// nonlinear or mixture_local.
    #[arg(long)]
    pub experiment: String,
    /// `<param>=<v>,...;<param>=<v>,...`, replacing the experiment's grid.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `α = α* − Δα`; `none` to use `--alpha` as given.
    #[arg(long)]
    pub delta_alpha: Option<String>,
    /// Update modes compared by per-round experiments, comma-separated, each
    /// optionally with a step size (`full_gradient:0.4`).
    #[arg(long)]
    pub variants: Option<String>,
    /// Mixture component the perturbed start is centred on.
    #[arg(long)]
    pub mixture_target: Option<usize>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub algo: AlgoArgs,
    /// Directory for `<experiment>_runs.csv` and `<experiment>_summary.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Keys written to metadata sidecars that carry no option.
const INFORMATIONAL_KEYS: [&str; 3] = ["table", "version", "seed-rule"];

/// Expands `--config <file>` into `--key=value` arguments placed right after
/// the subcommand path, ahead of the user's own options, so that the latter
/// win.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>, Error> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            config = Some(iter.next().ok_or_else(|| Error::Config("--config needs a file".into()))?);
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{path}: {e}"))))?;
    let entries = parse_key_values(&text).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    let injected: Vec<String> = entries
        .into_iter()
        .filter(|(k, _)| !INFORMATIONAL_KEYS.contains(&k.as_str()))
        .map(|(k, v)| format!("--{k}={v}"))
        .collect();
    // Program name, then the subcommand path.
    let split = 1 + rest.iter().skip(1).take_while(|a| !a.starts_with('-')).count();
    let tail = rest.split_off(split.min(rest.len()));
    rest.extend(injected);
    rest.extend(tail);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_is_injected_after_the_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.cfg");
        std::fs::write(&path, "# base\nalpha_star=0.9\nversion=0.1.0\nseed = 4\n").unwrap();
        let args = strings(&["itlm", "generate", "--seed", "7", "--config", path.to_str().unwrap()]);
        let expanded = expand_config(args).unwrap();
        assert_eq!(expanded, strings(&["itlm", "generate", "--alpha-star=0.9", "--seed=4", "--seed", "7"]));

        let cli = Cli::try_parse_from(
            expand_config(strings(&["itlm", "generate", "--out", "x", "--seed", "7", &format!("--config={}", path.display())]))
                .unwrap(),
        )
        .unwrap();
        let Command::Generate(g) = cli.command else { panic!() };
        assert_eq!((g.seed, g.data.alpha_star), (7, Some(0.9)));
    }

    #[test]
    fn missing_config_file_is_an_io_error() {
        let err = expand_config(strings(&["itlm", "fit", "--config", "/nonexistent/c.cfg"])).unwrap_err();
        assert_eq!(err.kind(), itlm::ErrorKind::Io);
        assert!(expand_config(strings(&["itlm", "fit", "--config"])).is_err());
    }
}

//! `itlm`: generate datasets, fit ITLM, query the exhaustive oracles and run
//! the experiment sweeps.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for numerical
//! failures, 4 for I/O errors.

mod args;

use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use itlm::experiment::{emit_csv, run_sweep, Cell, Experiment, Grid, SweepSpec, Table};
use itlm::io::{load_dataset, parse_link, save_dataset};
use itlm::params::{self, UpdateFields};
use itlm::rng::SEED_RULE_VERSION;
use itlm::{
    generate, run_itlm, CorruptionModel, Error, ErrorKind, GenConfig,
    ItlmConfig,
};

use args::{AlgoArgs, Cli, Command, DataArgs, ExactArgs, FitArgs, GenerateArgs, OracleCommand, RegularityArgs, SweepArgs};

fn main() -> ExitCode {
    let argv = match args::expand_config(std::env::args().collect()) {
        Ok(argv) => argv,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Numerical => 3,
        ErrorKind::Io => 4,
    })
}

/// Prefixes I/O errors with the file they concern.
fn at<T>(path: &Path, r: Result<T, Error>) -> Result<T, Error> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        e => e,
    })
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Generate(a) => cmd_generate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Oracle(OracleCommand::Exact(a)) => cmd_exact(a),
        Command::Oracle(OracleCommand::Regularity(a)) => cmd_regularity(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Applies the options that were given on top of `base`.
fn apply_data(base: &mut GenConfig, a: &DataArgs) -> Result<(), Error> {
    if let Some(n) = a.n {
        base.n = n;
    }
    if let Some(d) = a.d {
        base.d = d;
    }
    if let Some(alpha_star) = a.alpha_star {
        base.alpha_star = alpha_star;
    }
    if let Some(sigma) = a.sigma {
        base.sigma = sigma;
    }
    if let Some(link) = &a.link {
        base.link = parse_link(link).map_err(Error::Config)?;
    }
    if let Some(c) = &a.corruption {
        base.corruption = params::parse_corruption(c)?;
    }
    if let Some(t) = &a.theta_star {
        base.theta_star = params::parse_theta_star(t)?;
    }
    Ok(())
}

fn apply_algo(base: &mut ItlmConfig, a: &AlgoArgs) -> Result<(), Error> {
    if let Some(alpha) = a.alpha {
        base.alpha = alpha;
    }
    if let Some(rounds) = a.rounds {
        base.rounds = rounds;
    }
    let mut fields = UpdateFields::from_policy(&base.update);
    if let Some(mode) = &a.update {
        fields.mode = mode.clone();
    }
    if let Some(eta) = a.eta {
        fields.eta = eta;
    }
    if let Some(steps) = a.steps {
        fields.steps = steps;
    }
    if let Some(batch) = a.batch {
        fields.batch = batch;
    }
    if let Some(reinit) = a.reinit {
        fields.reinit = reinit;
    }
    if let Some(scale) = a.reinit_scale {
        fields.reinit_scale = scale;
    }
    if let Some(schedule) = &a.schedule {
        fields.schedule = params::parse_schedule(schedule)?;
    }
    let update = fields.build()?;
    if a.update.is_some() && a.init.is_none() {
        base.init = ItlmConfig::new(base.alpha, base.rounds, update.clone(), base.seed).init;
    }
    base.update = update;
    if let Some(init) = &a.init {
        base.init = params::parse_init(init)?;
    }
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Error> {
    let mut cfg = GenConfig::random_output(1000, 100, 0.8, 0.2, a.seed);
    apply_data(&mut cfg, &a.data)?;
    let dataset = generate(&cfg)?;
    at(&a.out, save_dataset(&dataset, &a.out))?;
    let meta = vec![
        ("version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("seed-rule".to_string(), SEED_RULE_VERSION.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("n".to_string(), cfg.n.to_string()),
        ("d".to_string(), cfg.d.to_string()),
        ("alpha-star".to_string(), cfg.alpha_star.to_string()),
        ("sigma".to_string(), cfg.sigma.to_string()),
        ("link".to_string(), itlm::io::format_link(cfg.link)),
        ("corruption".to_string(), params::format_corruption(&cfg.corruption)),
        ("theta-star".to_string(), params::format_theta_star(&cfg.theta_star)),
    ];
    let table = Table { metadata: meta, ..Table::default() };
    let meta_path = itlm::experiment::metadata_path(&a.out);
    let file = at(&meta_path, std::fs::File::create(&meta_path).map_err(Error::from))?;
    table.write_metadata(io::BufWriter::new(file))
}

/// Writes `table` to `out` with its sidecar, or the CSV alone to stdout.
fn output(table: &Table, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => at(path, emit_csv(table, path)),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            table.write_csv(&mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn subset_text(subset: &[usize]) -> Cell {
    Cell::Text(subset.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" "))
}

fn cmd_fit(a: FitArgs) -> Result<(), Error> {
    let dataset = at(&a.data, load_dataset(&a.data))?;
    let alpha = a.algo.alpha.ok_or_else(|| Error::Config("fit needs --alpha".into()))?;
    let mut cfg = ItlmConfig::new(alpha, 10, itlm::UpdatePolicy::closed_form(), a.seed);
    apply_algo(&mut cfg, &a.algo)?;
    // A numerical failure still reports the rounds completed before it.
    let (trace, failure) = match run_itlm(&dataset, &cfg) {
        Ok(trace) => (trace, None),
        Err(e) if e.error.kind() == ErrorKind::Numerical => (*e.partial, Some(e.error)),
        Err(e) => return Err(e.error),
    };
    let d = dataset.d();
    let mut columns = vec!["round", "trimmed_loss", "recovery_error", "contamination", "clean_recovery_ratio", "selected"];
    let theta_names: Vec<String> = (0..d).map(|j| format!("theta_{j}")).collect();
    columns.extend(theta_names.iter().map(String::as_str));
    let mut table = Table::new(&columns);
    for r in &trace.rounds {
        let mut row: Vec<Cell> = vec![
            r.round.into(),
            r.trimmed_loss.into(),
            r.recovery_error.into(),
            r.contamination.into(),
            r.clean_recovery_ratio.into(),
            r.selected.as_deref().map_or(Cell::Empty, subset_text),
        ];
        row.extend(r.theta.iter().map(|v| Cell::Float(*v)));
        table.push(row);
    }
    let update = UpdateFields::from_policy(&cfg.update);
    table.metadata = vec![
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("seed-rule".into(), SEED_RULE_VERSION.into()),
        ("data".into(), a.data.display().to_string()),
        ("seed".into(), cfg.seed.to_string()),
        ("alpha".into(), cfg.alpha.to_string()),
        ("rounds".into(), cfg.rounds.to_string()),
        ("init".into(), params::format_init(&cfg.init)),
        ("update".into(), update.mode),
        ("eta".into(), update.eta.to_string()),
        ("steps".into(), update.steps.to_string()),
        ("batch".into(), update.batch.to_string()),
        ("reinit".into(), update.reinit.to_string()),
        ("reinit-scale".into(), update.reinit_scale.to_string()),
        ("schedule".into(), params::format_schedule(&update.schedule)),
    ];
    output(&table, a.out.as_deref())?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_exact(a: ExactArgs) -> Result<(), Error> {
    let dataset = at(&a.data, load_dataset(&a.data))?;
    let exact = itlm::oracle::exact_trimmed_loss_with_guard(&dataset, a.alpha, a.max_n)?;
    let mut table = Table::new(&["value", "subset", "theta", "skipped"]);
    table.push(vec![
        exact.value.into(),
        subset_text(&exact.subset),
        Cell::Text(params::format_vector(&exact.theta)),
        Cell::Text(exact.skipped.to_string()),
    ]);
    table.metadata = vec![
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("data".into(), a.data.display().to_string()),
        ("alpha".into(), a.alpha.to_string()),
        ("max-n".into(), a.max_n.to_string()),
    ];
    output(&table, a.out.as_deref())
}

fn cmd_regularity(a: RegularityArgs) -> Result<(), Error> {
    let dataset = at(&a.data, load_dataset(&a.data))?;
    let mut table = Table::new(&["k", "psi_minus", "psi_plus", "argmin_subset", "argmax_subset"]);
    for &k in &a.k {
        let r = itlm::oracle::regularity_constants_with_guard(dataset.features(), k, a.max_subsets)?;
        table.push(vec![
            k.into(),
            r.psi_minus.into(),
            r.psi_plus.into(),
            subset_text(&r.argmin_subset),
            subset_text(&r.argmax_subset),
        ]);
    }
    table.metadata = vec![
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("data".into(), a.data.display().to_string()),
        ("max-subsets".into(), a.max_subsets.to_string()),
    ];
    output(&table, a.out.as_deref())
}

fn sweep_spec(a: &SweepArgs) -> Result<SweepSpec, Error> {
    let experiment: Experiment = a.experiment.parse()?;
    let mut spec = SweepSpec::defaults(experiment);
    if let Some(grid) = &a.grid {
        spec.grid = Grid::parse(grid)?;
    }
    if let Some(repeats) = a.repeats {
        spec.repeats = repeats;
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    apply_data(&mut spec.data, &a.data)?;
    // A mixture's first weight follows α* unless the weights were given.
    if a.data.alpha_star.is_some() && a.data.corruption.is_none() {
        if let CorruptionModel::Mixture { .. } = spec.data.corruption {
            spec.data.corruption = CorruptionModel::two_component_mixture(spec.data.alpha_star);
        }
    }
    apply_algo(&mut spec.itlm, &a.algo)?;
    match a.delta_alpha.as_deref() {
        Some("none") => spec.delta_alpha = None,
        Some(v) => spec.delta_alpha = Some(itlm::io::parse_real(v).map_err(Error::Config)?),
        None if a.algo.alpha.is_some() => spec.delta_alpha = None,
        None => {}
    }
    if let Some(variants) = &a.variants {
        spec.variants = params::parse_variants(variants, &UpdateFields::from_policy(&spec.itlm.update))?;
    }
    if let Some(target) = a.mixture_target {
        spec.mixture_target = target;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Error> {
    let spec = sweep_spec(&a)?;
    let out = run_sweep(&spec)?;
    at(&a.out_dir, std::fs::create_dir_all(&a.out_dir).map_err(Error::from))?;
    let name = spec.experiment.name();
    let runs = a.out_dir.join(format!("{name}_runs.csv"));
    let summary = a.out_dir.join(format!("{name}_summary.csv"));
    at(&runs, emit_csv(&out.runs, &runs))?;
    at(&summary, emit_csv(&out.summary, &summary))?;
    eprintln!("wrote {} and {}", runs.display(), summary.display());
    Ok(())
}

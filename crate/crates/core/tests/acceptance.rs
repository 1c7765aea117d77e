//! Acceptance suite. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion.
//!
//! Some criteria fail for this estimator at their stated thresholds. The
//! report is the deliverable, so by default the process exits zero; pass
//! `--strict` (`cargo test --test acceptance -- --strict`) to exit non-zero
//! on any FAIL.
//!
//! A criterion passes only if its check holds and it finishes within its
//! time budget.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use itlm::experiment::{run_sweep, Experiment, Grid, GridParam, SweepSpec, Table};
use itlm::io::write_dataset;
use itlm::oracle::regularity_constants;
use itlm::rng::{stream, Purpose};
use itlm::stats::{median, spearman};
use itlm::{
    contamination_profile, exact_trimmed_loss, generate, loss_gradient, run_itlm, sample_loss, select_k_smallest,
    ComponentSpec, CorruptionModel, Dataset, GenConfig, Init, ItlmConfig, LinkFunction, Parameter, ThetaStar,
    UpdatePolicy,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Per-run error traces of one variant, in (grid, repeat) order.
fn traces(table: &Table, variant: &str) -> Vec<Vec<f64>> {
    let col = |name: &str| table.column_index(name).unwrap();
    let (g, r, v, e) = (col("grid_index"), col("repeat"), col("variant"), col("error"));
    let mut runs: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for row in &table.rows {
        if row[v].render() != variant {
            continue;
        }
        let key = (format!("{:>10}", row[g].render()), format!("{:>10}", row[r].render()));
        runs.entry(key).or_default().push(row[e].as_f64().unwrap());
    }
    runs.into_values().collect()
}

/// True when every ratio `eₜ₊₁/eₜ` is below 1 for the rounds that start
/// outside the `threshold` ball.
fn contracts_until(errors: &[f64], threshold: f64) -> bool {
    errors.windows(2).take_while(|w| w[0] > threshold).all(|w| w[1] < w[0])
}

fn c1_noiseless_exact_recovery() -> Outcome {
    let cfg = GenConfig {
        corruption: CorruptionModel::None,
        ..GenConfig::random_output(1000, 100, 1.0, 0.0, 1)
    };
    let data = generate(&cfg).unwrap();
    let trace = run_itlm(&data, &ItlmConfig::new(1.0, 1, UpdatePolicy::closed_form(), 1)).unwrap();
    let err = trace.final_recovery_error().unwrap();
    outcome(err <= 1e-8, format!("error {err:.3e} (limit 1e-8)"))
}

fn c2_oracle_lower_bound() -> Outcome {
    let mut below = 0;
    let mut worst_gap = f64::INFINITY;
    for seed in 0..50 {
        let data = generate(&GenConfig::random_output(8, 1, 0.75, 0.1, seed)).unwrap();
        let exact = exact_trimmed_loss(&data, 0.5).unwrap();
        let trace = run_itlm(&data, &ItlmConfig::new(0.5, 10, UpdatePolicy::closed_form(), seed)).unwrap();
        let itlm = trace.rounds.last().unwrap().trimmed_loss;
        // Both values are sums of four squared residuals; allow for rounding.
        let gap = itlm - exact.value;
        worst_gap = worst_gap.min(gap);
        if gap < -1e-12 * exact.value.max(1.0) {
            below += 1;
        }
    }

    let mut agree = 0;
    for seed in 0..50 {
        let cfg = GenConfig {
            corruption: CorruptionModel::AdversarialModel { theta_adv: ComponentSpec::RandomUnit, offset: 10.0 },
            ..GenConfig::random_output(8, 1, 0.5, 0.0, 1000 + seed)
        };
        let data = generate(&cfg).unwrap();
        let exact = exact_trimmed_loss(&data, 0.5).unwrap();
        let trace = run_itlm(&data, &ItlmConfig::new(0.5, 10, UpdatePolicy::closed_form(), seed)).unwrap();
        if trace.last_selected().unwrap().selected.as_deref() == Some(exact.subset.as_slice()) {
            agree += 1;
        }
    }
    outcome(
        below == 0 && agree == 50,
        format!("{below}/50 below the exact value (min gap {worst_gap:.2e}); subset agreement {agree}/50"),
    )
}

fn c3_contraction() -> Outcome {
    let mut spec = SweepSpec::defaults(Experiment::Convergence);
    spec.grid = Grid::new().axis(GridParam::Sigma, &[0.01]);
    spec.variants = vec![UpdatePolicy::closed_form()];
    spec.itlm.rounds = 10;
    spec.seed = 3;
    let out = run_sweep(&spec).unwrap();
    let runs = traces(&out.runs, "closed_form");
    let sigma = 0.01;
    let contracting = runs.iter().filter(|e| contracts_until(e, 10.0 * sigma)).count();
    let ratio_median: Vec<f64> = (0..3).map(|t| median(&runs.iter().map(|e| e[t + 1] / e[t]).collect::<Vec<_>>())).collect();
    let superlinear = ratio_median[0] > ratio_median[1] && ratio_median[1] > ratio_median[2];
    let error_median: Vec<f64> = (0..4).map(|t| median(&runs.iter().map(|e| e[t]).collect::<Vec<_>>())).collect();
    outcome(
        contracting >= 95 && superlinear,
        format!(
            "{contracting}/100 contract until 10σ (need 95); median ratios e1/e0..e3/e2 {ratio_median:.3?} \
             (need decreasing); median errors e0..e3 {error_median:.4?}"
        ),
    )
}

fn summary_value(table: &Table, column: &str, row: usize) -> f64 {
    table.column(column).unwrap()[row].unwrap()
}

fn c4_inconsistency() -> Outcome {
    let mut spec = SweepSpec::defaults(Experiment::Inconsistency);
    spec.grid = Grid::new().axis(GridParam::N, &[1000.0, 5000.0, 25000.0]);
    spec.data.sigma = 1.0;
    spec.repeats = 50;
    spec.seed = 4;
    let out = run_sweep(&spec).unwrap();
    let s = &out.summary;
    let (itlm_small, itlm_large) = (summary_value(s, "itlm_median", 0), summary_value(s, "itlm_median", 2));
    let (oracle_small, oracle_large) = (summary_value(s, "oracle_median", 0), summary_value(s, "oracle_median", 2));
    let itlm_ratio = itlm_large / itlm_small;
    let oracle_shrink = oracle_small / oracle_large;
    outcome(
        itlm_ratio >= 0.5 && oracle_shrink >= 3.0,
        format!(
            "ITLM median {itlm_small:.4} -> {itlm_large:.4} (ratio {itlm_ratio:.3}, need >= 0.5); \
             oracle {oracle_small:.4} -> {oracle_large:.4} (shrink {oracle_shrink:.2}x, need >= 3)"
        ),
    )
}

fn c5_recovery_vs_alpha_star() -> Outcome {
    let mut spec = SweepSpec::defaults(Experiment::RecoveryVsAlphaStar);
    spec.seed = 5;
    let out = run_sweep(&spec).unwrap();
    let s = &out.summary;
    let alpha_star: Vec<f64> = s.column("alpha_star").unwrap().into_iter().map(Option::unwrap).collect();
    let itlm: Vec<f64> = s.column("itlm_median").unwrap().into_iter().map(Option::unwrap).collect();
    let naive: Vec<f64> = s.column("naive_median").unwrap().into_iter().map(Option::unwrap).collect();
    let rho = spearman(&alpha_star, &itlm);
    let beaten: Vec<bool> = (0..itlm.len()).filter(|&i| alpha_star[i] >= 0.7 - 1e-9).map(|i| itlm[i] <= 0.5 * naive[i]).collect();
    let worst = (0..itlm.len())
        .filter(|&i| alpha_star[i] >= 0.7 - 1e-9)
        .map(|i| itlm[i] / naive[i])
        .fold(0.0, f64::max);
    outcome(
        rho <= -0.9 && beaten.iter().all(|&b| b),
        format!(
            "Spearman {rho:.3} (need <= -0.9); worst ITLM/naive median ratio for α* >= 0.7 is {worst:.3} \
             (need <= 0.5); ITLM medians {itlm:.4?}; naive medians {naive:.4?}"
        ),
    )
}

fn c6_misspecification() -> Outcome {
    let mut spec = SweepSpec::defaults(Experiment::Misspecification);
    spec.grid = Grid::new().axis(GridParam::AlphaStar, &[0.8]).axis(GridParam::DeltaAlpha, &[0.05, 0.10, 0.15]);
    spec.seed = 6;
    let out = run_sweep(&spec).unwrap();
    let medians: Vec<f64> = out.summary.column("itlm_median").unwrap().into_iter().map(Option::unwrap).collect();
    let spread = medians.iter().cloned().fold(0.0, f64::max) / medians.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(spread < 3.0, format!("medians {medians:.4?}, max/min {spread:.3} (need < 3)"))
}

fn c7_mixture_local() -> Outcome {
    let mut spec = SweepSpec::defaults(Experiment::MixtureLocal);
    spec.grid = Grid::new().axis(GridParam::Rho, &[0.1]);
    spec.data.sigma = 0.05;
    spec.itlm.alpha = 0.65;
    spec.delta_alpha = None;
    spec.seed = 7;
    let out = run_sweep(&spec).unwrap();
    let fraction = summary_value(&out.summary, "converged_fraction", 0);
    outcome(fraction >= 0.9, format!("{:.0}/100 converge to component 0 (need 90)", fraction * 100.0))
}

fn c8_nonlinear() -> Outcome {
    let mut spec = SweepSpec::defaults(Experiment::Nonlinear);
    spec.grid = Grid::new().axis(GridParam::Sigma, &[0.01]);
    spec.seed = 8;
    let out = run_sweep(&spec).unwrap();
    let runs = traces(&out.runs, "full_gradient");
    let contracting = runs.iter().filter(|e| contracts_until(e, 0.1)).count();
    let reached = runs.iter().filter(|e| e.iter().any(|&x| x <= 0.1)).count();
    outcome(
        contracting >= 90,
        format!("{contracting}/100 contract until 10σ (need 90); {reached}/100 reach 10σ within {} rounds", spec.itlm.rounds),
    )
}

fn c9_properties() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = stream(9, Purpose::Experiment);

    // Gradient against central differences.
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = 4;
        let link = if rng.random_bool(0.5) { LinkFunction::Identity } else { LinkFunction::piecewise(1.0, 1.2).unwrap() };
        let phi: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let y: f64 = rng.sample(StandardNormal);
        let data = Dataset::from_rows(&[phi], &[y], link).unwrap();
        let theta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let g = loss_gradient(&Parameter::new(theta.clone()).unwrap(), &data, 0).unwrap();
        let h = 1e-6;
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = h;
            let f = |t: DVector<f64>| sample_loss(&Parameter::new(t).unwrap(), &data, 0).unwrap();
            let fd = (f(&theta + &e) - f(&theta - &e)) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1e-3));
        }
    }
    if worst > 1e-5 {
        failures.push(format!("gradient rel. err {worst:.2e}"));
    }

    // Regularity constants: ordered and monotone in k.
    for trial in 0..5 {
        let n = 10;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let reports: Vec<_> = (3..=n).map(|k| regularity_constants(&x, k).unwrap()).collect();
        let ordered = reports.iter().all(|r| r.psi_minus <= r.psi_plus);
        let monotone = reports.windows(2).all(|w| w[1].psi_minus >= w[0].psi_minus && w[1].psi_plus >= w[0].psi_plus);
        if !(ordered && monotone) {
            failures.push(format!("regularity trial {trial}"));
        }
    }

    // Closed-form ITLM never increases the trimmed loss.
    let mut nonmonotone = 0;
    for seed in 0..100 {
        let data = generate(&GenConfig::random_output(60, 3, 0.7, 0.1, 100 + seed)).unwrap();
        let trace = run_itlm(&data, &ItlmConfig::new(0.6, 8, UpdatePolicy::closed_form(), seed)).unwrap();
        let tl: Vec<f64> = trace.rounds.iter().map(|r| r.trimmed_loss).collect();
        if tl.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
            nonmonotone += 1;
        }
    }
    if nonmonotone > 0 {
        failures.push(format!("{nonmonotone}/100 trimmed-loss increases"));
    }

    // Selection contracts.
    let sel = select_k_smallest(&[2.0, 1.0, 1.0, 0.5], 2).unwrap();
    let ties = select_k_smallest(&[1.0, 1.0, 1.0], 2).unwrap();
    if sel != vec![1, 3] || ties != vec![0, 1] || select_k_smallest(&[1.0, 2.0], 3).is_ok() {
        failures.push("selection contract".into());
    }
    for _ in 0..50 {
        let n = rng.random_range(1..40);
        let k = rng.random_range(1..=n);
        let losses: Vec<f64> = (0..n).map(|_| (rng.random_range(0..5)) as f64).collect();
        let s = select_k_smallest(&losses, k).unwrap();
        let threshold = s.iter().map(|&i| losses[i]).fold(f64::MIN, f64::max);
        let ok = s.len() == k
            && s.windows(2).all(|w| w[0] < w[1])
            && (0..n).filter(|i| !s.contains(i)).all(|i| losses[i] >= threshold);
        if !ok {
            failures.push("selection cardinality/order".into());
            break;
        }
    }

    // Seeded runs are bit-identical.
    let bytes = |seed| {
        let mut buf = Vec::new();
        write_dataset(&generate(&GenConfig::random_output(50, 4, 0.8, 0.2, seed)).unwrap(), &mut buf).unwrap();
        buf
    };
    let data = generate(&GenConfig::random_output(200, 5, 0.8, 0.2, 11)).unwrap();
    let sgd = ItlmConfig::new(0.75, 5, UpdatePolicy::batch_sgd(itlm::SgdParams::new(0.05, 10, 16)), 4);
    let mut small = SweepSpec::defaults(Experiment::RecoveryVsAlphaStar);
    small.repeats = 2;
    small.data.n = 200;
    small.data.d = 5;
    let csv = |spec: &SweepSpec| {
        let out = run_sweep(spec).unwrap();
        let mut buf = Vec::new();
        out.runs.write_csv(&mut buf).unwrap();
        out.summary.write_csv(&mut buf).unwrap();
        buf
    };
    if bytes(3) != bytes(3) || run_itlm(&data, &sgd).unwrap() != run_itlm(&data, &sgd).unwrap() || csv(&small) != csv(&small)
    {
        failures.push("seeded rerun differs".into());
    }

    outcome(
        failures.is_empty(),
        if failures.is_empty() { format!("all properties hold (worst gradient rel. err {worst:.1e})") } else { failures.join("; ") },
    )
}

fn c10_contamination_scaling() -> Outcome {
    let deltas: [f64; 3] = [0.05, 0.1, 0.2];
    let mut medians = Vec::new();
    for (g, &delta) in deltas.iter().enumerate() {
        let mut counts = Vec::new();
        for r in 0..100 {
            let seed = itlm::rng::run_seed(10, g, r);
            // Clean residuals N(0, Δ²), bad residuals N(0, 1).
            let cfg = GenConfig {
                theta_star: ThetaStar::Given(DVector::zeros(1)),
                corruption: CorruptionModel::RandomOutput { std: (1.0 - delta * delta).sqrt() },
                ..GenConfig::random_output(2000, 1, 0.8, delta, seed)
            };
            let data = generate(&cfg).unwrap();
            let itlm_cfg = ItlmConfig::new(0.7, 1, UpdatePolicy::closed_form(), seed)
                .with_init(Init::Given(Parameter::zeros(1)));
            let trace = run_itlm(&data, &itlm_cfg).unwrap();
            counts.push(contamination_profile(&data, &trace).unwrap()[0] as f64);
        }
        medians.push(median(&counts));
    }
    let mut within = true;
    let mut factors = Vec::new();
    for i in 0..deltas.len() {
        for j in i + 1..deltas.len() {
            let factor = (medians[j] / medians[i]) / (deltas[j] / deltas[i]);
            factors.push(factor);
            within &= (1.0 / 3.0..=3.0).contains(&factor);
        }
    }
    outcome(
        within,
        format!("median |S\\S*| {medians:?}; growth relative to Δ ratio {factors:.3?} (need within [1/3, 3])"),
    )
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 10] = [
        ("C1 noiseless exact recovery", c1_noiseless_exact_recovery, Duration::from_secs(1)),
        ("C2 exact trimmed-loss lower bound", c2_oracle_lower_bound, Duration::from_secs(30)),
        ("C3 per-round contraction", c3_contraction, Duration::from_secs(300)),
        ("C4 inconsistency in n", c4_inconsistency, Duration::from_secs(900)),
        ("C5 recovery vs clean fraction", c5_recovery_vs_alpha_star, Duration::from_secs(600)),
        ("C6 misspecification robustness", c6_misspecification, Duration::from_secs(600)),
        ("C7 mixture local convergence", c7_mixture_local, Duration::from_secs(300)),
        ("C8 non-linear link contraction", c8_nonlinear, Duration::from_secs(600)),
        ("C9 property suite", c9_properties, Duration::from_secs(120)),
        ("C10 contamination scaling", c10_contamination_scaling, Duration::from_secs(180)),
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict");
    let only: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let (mut ran, mut failed) = (0, 0);
    for (name, check, budget) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(&format!("{o} "))) {
            continue;
        }
        let start = Instant::now();
        ran += 1;
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

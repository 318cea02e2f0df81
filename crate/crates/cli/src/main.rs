//! `epec`: sample buildouts, train surrogates, solve for equilibria, replug
//! hybrid solutions into the exact model, and clear capacity auctions.

mod manifest;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use epec_core::capacity_auction;
use epec_core::equilibrium::{
    self, DiagonalizeConfig, EquilibriumResult, EvaluatorKind, GencoStrategy, ProfitEvaluator,
};
use epec_core::sampler::{self, FEATURE_PREFIX, TARGET_PREFIX};
use epec_core::scenario::Scenario;
use epec_core::seed;
use epec_core::surrogate::{self, SurrogateSet, TargetTransform, TrainConfig};

use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "epec", version, about = "Generation-expansion equilibrium pipeline")]
struct Cli {
    /// Worker threads for sampling and objective evaluation (0 = all cores).
    #[arg(long, global = true, env = "EPEC_WORKERS", default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample random buildouts and record each technology's operational profit.
    Sample(SampleArgs),
    /// Train one surrogate per target column of a dataset.
    Train(TrainArgs),
    /// Find an equilibrium by diagonalization.
    Solve(SolveArgs),
    /// Re-solve a hybrid equilibrium with the exact evaluator.
    Validate(ValidateArgs),
    /// Clear a capacity auction.
    Auction(AuctionArgs),
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Number of buildouts.
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Dataset CSV to write.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write total payout against uniform total capacity.
    #[arg(long)]
    payout_sweep: Option<PathBuf>,
    #[arg(long, default_value_t = 1000.0)]
    sweep_min: f64,
    #[arg(long, default_value_t = 1700.0)]
    sweep_max: f64,
    #[arg(long, default_value_t = 1.0)]
    sweep_step: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transform {
    Identity,
    SignedLog,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Target column(s) to train; all `profit_*` columns by default.
    #[arg(long = "target")]
    targets: Vec<String>,
    /// Directory for `<target>.json` model files and the error report.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// L2 regularization on leaf weights.
    #[arg(long)]
    l2_leaf_reg: Option<f64>,
    /// Minimum split gain.
    #[arg(long)]
    min_split_gain: Option<f64>,
    /// Rounds without held-out improvement before stopping (0 disables).
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, value_enum)]
    target_transform: Option<Transform>,
    /// Do not let trees split on regional capacity totals.
    #[arg(long)]
    no_sum_features: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Evaluator {
    Benchmark,
    Hybrid,
}

#[derive(Args)]
struct SolverArgs {
    /// Convergence threshold on the largest strategy change, MW.
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    #[arg(long, default_value_t = 20)]
    max_sweeps: usize,
    /// Keep a Genco's strategy unless its best response gains more than this
    /// fraction of current profit.
    #[arg(long, default_value_t = 0.0)]
    keep_tolerance: f64,
    /// Independent DE runs per best response.
    #[arg(long, default_value_t = 3)]
    starts: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also search for profitable deviations; relative threshold.
    #[arg(long)]
    verify: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum)]
    evaluator: Evaluator,
    /// Directory of trained models (hybrid only).
    #[arg(long)]
    models: Option<PathBuf>,
    /// Starting strategies as an equilibrium CSV; zero investment by default.
    #[arg(long)]
    initial: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output directory for `equilibrium.csv` and `trace.csv`.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// `equilibrium.csv` from a hybrid solve.
    #[arg(long)]
    hybrid: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct AuctionArgs {
    /// CSV with `price_intercept,slope,max_quantity`.
    #[arg(long)]
    segments: PathBuf,
    /// CSV with `bid,pmax,derate`.
    #[arg(long)]
    offers: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let workers = cli.workers;
    let mut manifest = match cli.command {
        Command::Sample(a) => sample(a, workers)?,
        Command::Train(a) => train(a)?,
        Command::Solve(a) => solve(a, workers)?,
        Command::Validate(a) => validate(a, workers)?,
        Command::Auction(a) => auction(a)?,
    };
    manifest.workers = workers;
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let path = manifest.path();
    manifest.write(&path)?;
    Ok(())
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn sample(a: SampleArgs, workers: usize) -> Result<RunManifest> {
    let scenario = load_scenario(&a.scenario)?;
    let sample_seed = seed::derive_named(a.seed, "sample");
    let buildouts = sampler::sample_buildouts(a.n, &scenario.sampling_bounds(), sample_seed)?;
    let data = sampler::generate_dataset(&scenario, &buildouts, workers)?;
    create_dir(&parent_dir(&a.out))?;
    sampler::write_dataset(&data, &a.out)?;
    println!("wrote {} rows to {}", data.len(), a.out.display());

    let mut m = RunManifest::new("sample", parent_dir(&a.out));
    m.scenario = Some(a.scenario.clone());
    m.seeds.insert("master".into(), a.seed);
    m.seeds.insert("sample".into(), sample_seed);
    m.set("n", a.n);
    m.outputs.push(a.out.clone());

    if let Some(path) = a.payout_sweep {
        if !(a.sweep_step > 0.0 && a.sweep_max >= a.sweep_min) {
            bail!("sweep range needs sweep_step > 0 and sweep_max >= sweep_min");
        }
        let count = ((a.sweep_max - a.sweep_min) / a.sweep_step).floor() as usize;
        let totals: Vec<f64> = (0..=count)
            .map(|i| a.sweep_min + i as f64 * a.sweep_step)
            .collect();
        let points = sampler::payout_sweep(&scenario, &totals)?;
        create_dir(&parent_dir(&path))?;
        sampler::write_payout_sweep(&points, &path)?;
        let peak = points
            .iter()
            .fold(&points[0], |best, p| if p.payout > best.payout { p } else { best });
        println!(
            "payout peaks at {} MW; sweep written to {}",
            peak.total_capacity,
            path.display()
        );
        m.set("sweep_min", a.sweep_min);
        m.set("sweep_max", a.sweep_max);
        m.set("sweep_step", a.sweep_step);
        m.outputs.push(path);
    }
    Ok(m)
}

fn train(a: TrainArgs) -> Result<RunManifest> {
    let data = sampler::read_dataset(&a.dataset)
        .with_context(|| format!("reading dataset {}", a.dataset.display()))?;
    let targets: Vec<usize> = if a.targets.is_empty() {
        (0..data.target_names.len()).collect()
    } else {
        a.targets
            .iter()
            .map(|t| {
                data.target_index(t).with_context(|| {
                    format!(
                        "dataset has no target column `{t}` (available: {})",
                        data.target_names.join(", ")
                    )
                })
            })
            .collect::<Result<_>>()?
    };

    let mut m = RunManifest::new("train", a.out.clone());
    let mut config = TrainConfig {
        seed: seed::derive_named(a.seed, "train"),
        ..TrainConfig::default()
    };
    if let Some(v) = a.rounds {
        config.n_rounds = v;
        m.set("rounds", v);
    }
    if let Some(v) = a.max_depth {
        config.max_depth = v;
        m.set("max_depth", v);
    }
    if let Some(v) = a.learning_rate {
        config.learning_rate = v;
        m.set("learning_rate", v);
    }
    if let Some(v) = a.l2_leaf_reg {
        config.l2_leaf_reg = v;
        m.set("l2_leaf_reg", v);
    }
    if let Some(v) = a.min_split_gain {
        config.min_split_gain = v;
        m.set("min_split_gain", v);
    }
    if let Some(v) = a.patience {
        config.early_stopping_rounds = (v > 0).then_some(v);
        m.set("patience", v);
    }
    if let Some(t) = a.target_transform {
        config.target_transform = match t {
            Transform::Identity => TargetTransform::Identity,
            Transform::SignedLog => TargetTransform::SignedLog,
        };
        m.set("target_transform", format!("{:?}", config.target_transform));
    }
    if a.no_sum_features {
        config.sum_features = false;
        m.set("sum_features", false);
    }
    config.validate()?;

    let split_seed = seed::derive_named(a.seed, "split");
    let (set, reports) = surrogate::train_targets(&data, &targets, &config, split_seed)?;
    set.save_dir(&a.out)?;

    let report_path = a.out.join("train_report.csv");
    let mut out = std::fs::File::create(&report_path)
        .with_context(|| format!("creating {}", report_path.display()))?;
    writeln!(out, "target,train_relative_error,test_relative_error,rounds")?;
    for r in &reports {
        writeln!(
            out,
            "{},{},{},{}",
            r.target, r.evaluation.train_error, r.evaluation.test_error, r.rounds_kept
        )?;
        println!(
            "{}: train {:.2}%, test {:.2}% ({} rounds)",
            r.target,
            100.0 * r.evaluation.train_error,
            100.0 * r.evaluation.test_error,
            r.rounds_kept
        );
    }

    m.dataset = Some(a.dataset.clone());
    m.seeds.insert("master".into(), a.seed);
    m.seeds.insert("train".into(), config.seed);
    m.seeds.insert("split".into(), split_seed);
    for name in &set.target_names {
        m.outputs.push(SurrogateSet::model_path(&a.out, name));
    }
    m.outputs.push(report_path);
    Ok(m)
}

/// Load one model per scenario slot and check its features match.
fn load_models(scenario: &Scenario, dir: &Path) -> Result<Vec<surrogate::GbtModel>> {
    let labels = scenario.slot_labels();
    let targets: Vec<String> = labels.iter().map(|l| format!("{TARGET_PREFIX}{l}")).collect();
    let set = SurrogateSet::load_dir(dir, &targets)
        .with_context(|| format!("loading models from {}", dir.display()))?;
    let expected: Vec<String> = labels.iter().map(|l| format!("{FEATURE_PREFIX}{l}")).collect();
    for (name, model) in set.target_names.iter().zip(&set.models) {
        if model.feature_names != expected {
            bail!(
                "model {name} was trained on features [{}] but the scenario has [{}]",
                model.feature_names.join(", "),
                expected.join(", ")
            );
        }
    }
    Ok(set.models)
}

fn diagonalize_config(s: &SolverArgs, workers: usize, stage: &str) -> (DiagonalizeConfig, u64) {
    let stage_seed = seed::derive_named(s.seed, stage);
    let mut config = DiagonalizeConfig::new(stage_seed);
    config.epsilon = s.epsilon;
    config.max_sweeps = s.max_sweeps;
    config.keep_tolerance = s.keep_tolerance;
    config.search.n_starts = s.starts;
    config.search.de.workers = workers;
    (config, stage_seed)
}

fn write_solution(
    scenario: &Scenario,
    evaluator: &ProfitEvaluator,
    result: &EquilibriumResult,
    dir: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    create_dir(dir)?;
    let profits = (0..result.strategies.len())
        .map(|j| evaluator.profit(scenario, j, &result.strategies))
        .collect::<epec_core::Result<Vec<_>>>()?;
    let eq_path = dir.join("equilibrium.csv");
    equilibrium::write_csv_file(&eq_path, |out| {
        equilibrium::write_equilibrium_csv(out, scenario, result, &profits)
    })?;
    let trace_path = dir.join("trace.csv");
    equilibrium::write_csv_file(&trace_path, |out| {
        equilibrium::write_trace_csv(out, scenario, result)
    })?;
    m.outputs.push(eq_path);
    m.outputs.push(trace_path);
    println!(
        "{} after {} sweeps; total capacity {:.3} MW",
        if result.converged { "converged" } else { "did not converge" },
        result.iterations,
        result.total_mw(scenario)
    );
    for (g, s) in scenario.gencos().iter().zip(&result.strategies) {
        let parts: Vec<String> = s
            .invest
            .iter()
            .enumerate()
            .map(|(slot, x)| format!("{} {x:.3}", scenario.slot_label(slot)))
            .collect();
        println!("  {}: {}", g.id, parts.join(", "));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn verify(
    scenario: &Scenario,
    evaluator: &ProfitEvaluator,
    result: &EquilibriumResult,
    delta: f64,
    s: &SolverArgs,
    workers: usize,
    dir: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    let (config, verify_seed) = diagonalize_config(s, workers, "verify");
    let report =
        equilibrium::verify_nash(scenario, &result.strategies, evaluator, delta, &config.search)?;
    let path = dir.join("nash.csv");
    equilibrium::write_csv_file(&path, |out| {
        writeln!(out, "genco,incumbent_profit,best_deviation_profit,gain,threshold")?;
        for (j, g) in scenario.gencos().iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                g.id,
                report.incumbent[j],
                report.best_deviation[j],
                report.gains[j],
                report.thresholds[j]
            )?;
        }
        Ok(())
    })?;
    println!(
        "nash check: {} (largest relative gain {:.3e}, threshold {delta})",
        if report.certified { "certified" } else { "profitable deviation found" },
        report.max_relative_gain()
    );
    m.seeds.insert("verify".into(), verify_seed);
    m.set("verify", delta);
    m.outputs.push(path);
    Ok(())
}

fn record_solver(m: &mut RunManifest, s: &SolverArgs) {
    m.seeds.insert("master".into(), s.seed);
    m.set("epsilon", s.epsilon);
    m.set("max_sweeps", s.max_sweeps);
    m.set("keep_tolerance", s.keep_tolerance);
    m.set("starts", s.starts);
}

fn solve(a: SolveArgs, workers: usize) -> Result<RunManifest> {
    let scenario = load_scenario(&a.scenario)?;
    let evaluator = match a.evaluator {
        Evaluator::Benchmark => ProfitEvaluator::Benchmark,
        Evaluator::Hybrid => {
            let dir = a
                .models
                .as_deref()
                .context("--models is required with --evaluator hybrid")?;
            ProfitEvaluator::hybrid(&scenario, load_models(&scenario, dir)?)?
        }
    };
    let initial = match &a.initial {
        Some(path) => equilibrium::read_equilibrium_csv(path, &scenario)?,
        None => vec![GencoStrategy::zeros(scenario.n_slots()); scenario.gencos().len()],
    };
    let (config, solve_seed) = diagonalize_config(&a.solver, workers, "solve");
    let result = equilibrium::diagonalize(&scenario, &evaluator, initial, &config)?;

    let mut m = RunManifest::new("solve", a.out.clone());
    m.scenario = Some(a.scenario.clone());
    m.models = a.models.clone();
    m.set("evaluator", evaluator.kind().to_string());
    if let Some(p) = &a.initial {
        m.set("initial", p.display().to_string());
    }
    record_solver(&mut m, &a.solver);
    m.seeds.insert("solve".into(), solve_seed);
    write_solution(&scenario, &evaluator, &result, &a.out, &mut m)?;
    if let Some(delta) = a.solver.verify {
        verify(&scenario, &evaluator, &result, delta, &a.solver, workers, &a.out, &mut m)?;
    }
    Ok(m)
}

fn validate(a: ValidateArgs, workers: usize) -> Result<RunManifest> {
    let scenario = load_scenario(&a.scenario)?;
    let hybrid = equilibrium::read_equilibrium_csv(&a.hybrid, &scenario)?;
    let before: f64 = equilibrium::total_capacity(&scenario, &hybrid).iter().sum();
    let (config, validate_seed) = diagonalize_config(&a.solver, workers, "validate");
    let evaluator = ProfitEvaluator::Benchmark;
    let result = equilibrium::diagonalize(&scenario, &evaluator, hybrid, &config)?;
    println!("hybrid solution: {before:.3} MW");

    let mut m = RunManifest::new("validate", a.out.clone());
    m.scenario = Some(a.scenario.clone());
    m.set("hybrid", a.hybrid.display().to_string());
    m.set("evaluator", EvaluatorKind::Benchmark.to_string());
    record_solver(&mut m, &a.solver);
    m.seeds.insert("validate".into(), validate_seed);
    write_solution(&scenario, &evaluator, &result, &a.out, &mut m)?;
    if let Some(delta) = a.solver.verify {
        verify(&scenario, &evaluator, &result, delta, &a.solver, workers, &a.out, &mut m)?;
    }
    Ok(m)
}

fn auction(a: AuctionArgs) -> Result<RunManifest> {
    let segments = capacity_auction::read_segments_csv(&a.segments)?;
    let offers = capacity_auction::read_offers_csv(&a.offers)?;
    let result = capacity_auction::clear_auction(&segments, &offers)?;
    create_dir(&parent_dir(&a.out))?;
    equilibrium::write_csv_file(&a.out, |out| {
        capacity_auction::write_result_csv(out, &offers, &result)
    })?;
    println!(
        "cleared {} MW at price {}",
        result.cleared_quantity(),
        result.clearing_price
    );

    let mut m = RunManifest::new("auction", parent_dir(&a.out));
    m.inputs = BTreeMap::from([
        ("segments".to_string(), a.segments.clone()),
        ("offers".to_string(), a.offers.clone()),
    ]);
    m.outputs.push(a.out);
    Ok(m)
}

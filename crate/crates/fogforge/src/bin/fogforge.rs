use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fogforge::checkpoint::Checkpoint;
use fogforge::compare::{compare, labeled_points, render_svg, Series};
use fogforge::error::{Error, Result};
use fogforge::files::{read_scenario, write_json, write_scenario, write_text};
use fogforge::run::{read_solutions, solution_rows, RunDir};
use fogforge::sweep::{run_sweep, SweepConfig, SweepMember, SweepObserver, SweepPlan};
use fogforge::train::{train, Datasets, EpisodeMetrics, Instance, TrainConfig, TrainObserver};
use fogforge_core::agent::{infer_placement, PolicyModel};
use fogforge_core::baselines::{placement_trajectory, run_baseline, StrategyKind};
use fogforge_core::evo::{ga_solve, nsga2_solve, CrossoverKind, EvoConfig, MutationMode};
use fogforge_core::instance::{generate_scenario, ScenarioConfig};
use fogforge_core::model::evaluate;
use fogforge_core::oracle::{brute_force, DEFAULT_ENUMERATION_CAP};
use fogforge_core::{Application, DeviceSet, NormalizationBounds, WeightVector};
use serde::Serialize;

/// Multi-objective fog service placement workbench.
#[derive(Debug, Parser)]
#[command(name = "fogforge", version)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, env = "FOGFORGE_SEED")]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Use 1 for bit-reproducible runs.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a scenario file.
    Generate(GenerateArgs),
    /// Train one policy for a fixed weight vector.
    Train(TrainArgs),
    /// Train the five-point weight sweep with parameter transfer.
    Sweep(SweepArgs),
    /// Place an application with a trained checkpoint.
    Infer(InferArgs),
    /// Run a baseline heuristic.
    Baseline(BaselineArgs),
    /// Run the genetic algorithm or NSGA-II.
    Evo(EvoArgs),
    /// Enumerate every placement of a small application.
    Oracle(OracleArgs),
    /// Compare the solution sets of several run directories.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Devices besides the cloud.
    #[arg(long, default_value_t = 20)]
    devices: usize,
    #[arg(long, default_value_t = 3)]
    rows: usize,
    #[arg(long, default_value_t = 1)]
    apps: usize,
    #[arg(long)]
    extra_edge_prob: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainingFlags {
    /// Training configuration JSON; missing fields take desk defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    envs: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Scenario whose first application is used for the reported solutions
    /// instead of the first validation instance.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: TrainingFlags,
    /// Time weight; the cost weight is its complement.
    #[arg(long)]
    w_time: Option<f64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: TrainingFlags,
    /// Child episode budget as a fraction of the root's.
    #[arg(long)]
    child_fraction: Option<f64>,
}

#[derive(Debug, Args)]
struct Target {
    #[arg(long)]
    scenario: PathBuf,
    /// Application index within the scenario.
    #[arg(long, default_value_t = 0)]
    app: usize,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// A strategy name or `all`.
    #[arg(long, default_value = "all")]
    strategy: String,
    #[command(flatten)]
    target: Target,
    #[arg(long, default_value_t = 0.5)]
    w_time: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Algorithm {
    Ga,
    Nsga2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mutation {
    /// Each gene is redrawn with the mutation probability.
    PerGene,
    /// Each child redraws one gene with the mutation probability.
    Offspring,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Crossover {
    OnePoint,
    Uniform,
}

#[derive(Debug, Args)]
struct EvoArgs {
    algorithm: Algorithm,
    #[command(flatten)]
    target: Target,
    #[arg(long, default_value_t = 200)]
    population: usize,
    #[arg(long, default_value_t = 200)]
    generations: usize,
    #[arg(long, default_value_t = 0.15)]
    mutation_prob: f64,
    #[arg(long, value_enum, default_value_t = Mutation::PerGene)]
    mutation: Mutation,
    #[arg(long, value_enum, default_value_t = Crossover::OnePoint)]
    crossover: Crossover,
    /// GA time weight.
    #[arg(long, default_value_t = 0.5)]
    w_time: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    target: Target,
    /// Refuse instances with more placements than this.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u128,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Run directories holding solutions.csv; the directory name is the label.
    #[arg(required = true, num_args = 2..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Divergence { checkpoint: Some(path), .. } = &e {
                eprintln!("last good checkpoint: {}", path.display());
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::ThreadPool(e.to_string()))?;
    let threads = pool.current_num_threads();
    let ctx = Context { seed: cli.seed, threads };
    pool.install(|| match cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Infer(a) => infer(&ctx, a),
        Command::Baseline(a) => baseline(&ctx, a),
        Command::Evo(a) => evo(&ctx, a),
        Command::Oracle(a) => oracle(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
    })
}

struct Context {
    seed: Option<u64>,
    threads: usize,
}

impl Context {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn run_dir(&self, out: &Path, command: &str, config: &impl Serialize, seed: u64) -> Result<RunDir> {
        RunDir::create(out, command, config, seed, self.threads)
    }
}

fn generate(ctx: &Context, a: GenerateArgs) -> Result<()> {
    let mut config = ScenarioConfig {
        device_count: a.devices,
        rows_per_app: a.rows,
        applications: a.apps,
        seed: ctx.seed(),
        ..ScenarioConfig::default()
    };
    if let Some(p) = a.extra_edge_prob {
        config.extra_edge_prob = p;
    }
    config.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let scenario = generate_scenario(&config)?;
    write_scenario(&a.out, &scenario)?;
    println!(
        "wrote {} ({} devices, {} application(s) of {} services)",
        a.out.display(),
        scenario.devices.len(),
        scenario.applications.len(),
        a.rows * a.rows
    );
    Ok(())
}

fn load_target(t: &Target) -> Result<(Application, DeviceSet, NormalizationBounds)> {
    let mut scenario = read_scenario(&t.scenario)?;
    if t.app >= scenario.applications.len() {
        return Err(Error::Usage(format!(
            "{} has {} application(s); index {} requested",
            t.scenario.display(),
            scenario.applications.len(),
            t.app
        )));
    }
    let app = scenario.applications.swap_remove(t.app);
    let norms = NormalizationBounds::analytic(&app, &scenario.devices)?;
    Ok((app, scenario.devices, norms))
}

fn training_config(ctx: &Context, f: &TrainingFlags) -> Result<TrainConfig> {
    let mut c = match &f.config {
        Some(path) => fogforge::files::read_json(path)?,
        None => TrainConfig::desk(),
    };
    if let Some(s) = ctx.seed {
        c.seed = s;
    }
    if let Some(v) = f.episodes {
        c.episodes = v;
    }
    if let Some(v) = f.envs {
        c.envs_per_episode = v;
    }
    if let Some(v) = f.devices {
        c.scenario.device_count = v;
    }
    if let Some(v) = f.rows {
        c.scenario.rows_per_app = v;
    }
    if let Some(v) = f.test_size {
        c.test_size = v;
    }
    Ok(c)
}

/// Instance on which trained models report their solution points.
fn report_instance(f: &TrainingFlags, data: &Datasets) -> Result<Instance> {
    match &f.scenario {
        Some(path) => {
            let (app, devices, norms) = load_target(&Target { scenario: path.clone(), app: 0 })?;
            Ok(Instance { seed: 0, devices, app, norms })
        }
        None => data.validation.first().cloned().ok_or_else(|| Error::Usage("empty validation set".into())),
    }
}

struct TrainLog<'a> {
    run: &'a mut RunDir,
    checkpoints: PathBuf,
    weights: WeightVector,
}

impl TrainObserver for TrainLog<'_> {
    fn episode(&mut self, metrics: &EpisodeMetrics) -> Result<()> {
        self.run.metric(metrics)
    }

    fn best(&mut self, model: &PolicyModel, episode: usize, metric: f64) -> Result<()> {
        Checkpoint::new(model, self.weights, episode, Some(metric)).save(&self.checkpoints.join("best.json"))
    }
}

fn cmd_train(ctx: &Context, a: TrainArgs) -> Result<()> {
    let mut config = training_config(ctx, &a.common)?;
    if let Some(w) = a.w_time {
        config.weights = WeightVector::from_time_weight(w).map_err(|e| Error::Usage(e.to_string()))?;
    }
    config.validate()?;
    let data = Datasets::generate(&config)?;
    let target = report_instance(&a.common, &data)?;
    let mut run = ctx.run_dir(&a.common.out, "train", &config, config.seed)?;
    let checkpoints = run.checkpoints()?;
    let best_path = checkpoints.join("best.json");
    let outcome = {
        let mut log = TrainLog { run: &mut run, checkpoints: checkpoints.clone(), weights: config.weights };
        train(&config, &data, &mut log)
    };
    let outcome = outcome.map_err(|e| match e {
        Error::Divergence { message, .. } => {
            Error::Divergence { message, checkpoint: best_path.exists().then(|| best_path.clone()) }
        }
        other => other,
    })?;
    Checkpoint::new(&outcome.last, config.weights, outcome.episodes_run, None).save(&checkpoints.join("last.json"))?;
    run.add_output("checkpoints/best.json");
    run.add_output("checkpoints/last.json");
    let inference = infer_placement(&outcome.best, &target.app, &target.devices)?;
    run.solutions(&solution_rows(&[(Some(config.weights), inference.point)]))?;
    run.finish()?;
    println!(
        "best test objective {:.6} at episode {}; (time, cost) = ({}, {})",
        outcome.best_metric, outcome.best_episode, inference.point.time, inference.point.cost
    );
    Ok(())
}

struct SweepCheckpoints {
    dir: PathBuf,
}

impl SweepObserver for SweepCheckpoints {
    fn member(&self, m: &SweepMember) -> Result<()> {
        Checkpoint::new(&m.model, m.weights, m.episodes, Some(m.best_metric))
            .save(&self.dir.join(format!("node{}.json", m.node)))
    }
}

#[derive(Serialize)]
struct SweepSnapshot<'a> {
    train: &'a TrainConfig,
    sweep: SweepConfig,
    plan: &'a SweepPlan,
}

#[derive(Serialize)]
struct NodeMetric<'a> {
    node: usize,
    w_time: f64,
    #[serde(flatten)]
    metrics: &'a EpisodeMetrics,
}

fn cmd_sweep(ctx: &Context, a: SweepArgs) -> Result<()> {
    let config = training_config(ctx, &a.common)?;
    config.validate()?;
    let mut sweep = SweepConfig::default();
    if let Some(f) = a.child_fraction {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Usage(format!("child fraction {f} outside [0, 1]")));
        }
        sweep.child_fraction = f;
    }
    let plan = SweepPlan::standard();
    let data = Datasets::generate(&config)?;
    let target = report_instance(&a.common, &data)?;
    let mut run = ctx.run_dir(&a.common.out, "sweep", &SweepSnapshot { train: &config, sweep, plan: &plan }, config.seed)?;
    let observer = SweepCheckpoints { dir: run.checkpoints()? };
    let outcome = run_sweep(&plan, &config, &sweep, &data, &observer)?;
    if let Some((node, reason)) = outcome.failures.first() {
        let message = format!("sweep node {node} failed: {reason}");
        return Err(if reason.contains("diverge") || reason.contains("non-finite") {
            Error::Divergence { message, checkpoint: None }
        } else {
            Error::Usage(message)
        });
    }
    let mut points = Vec::with_capacity(outcome.members.len());
    for m in &outcome.members {
        for row in &m.metrics {
            run.metric(&NodeMetric { node: m.node, w_time: m.weights.w_time, metrics: row })?;
        }
        run.add_output(&format!("checkpoints/node{}.json", m.node));
        let inference = infer_placement(&m.model, &target.app, &target.devices)?;
        points.push((Some(m.weights), inference.point));
    }
    let rows = solution_rows(&points);
    run.solutions(&rows)?;
    run.finish()?;
    println!("{} solutions, {} non-dominated, {} episodes", rows.len(), rows.iter().filter(|r| !r.dominated()).count(), outcome.total_episodes());
    Ok(())
}

fn infer(ctx: &Context, a: InferArgs) -> Result<()> {
    let (ckpt, model) = Checkpoint::load(&a.checkpoint)?;
    let (app, devices, _) = load_target(&a.target)?;
    let inference = infer_placement(&model, &app, &devices)?;
    for (i, &d) in inference.placement.assignment.iter().enumerate() {
        let id = app.id_of(i);
        println!("S({},{}) -> {d}", id.row, id.col);
    }
    println!("(time, cost) = ({}, {})", inference.point.time, inference.point.cost);
    if let Some(out) = &a.out {
        #[derive(Serialize)]
        struct InferSnapshot<'a> {
            checkpoint: &'a Path,
            scenario: &'a Path,
            app: usize,
        }
        let snapshot = InferSnapshot { checkpoint: &a.checkpoint, scenario: &a.target.scenario, app: a.target.app };
        let mut run = ctx.run_dir(out, "infer", &snapshot, ctx.seed())?;
        run.metric(&serde_json::json!({ "order": inference.order, "placement": inference.placement.assignment }))?;
        run.solutions(&solution_rows(&[(Some(ckpt.weights), inference.point)]))?;
        run.finish()?;
    }
    Ok(())
}

fn baseline(ctx: &Context, a: BaselineArgs) -> Result<()> {
    let kinds: Vec<StrategyKind> = if a.strategy == "all" {
        StrategyKind::ALL.to_vec()
    } else {
        vec![a.strategy.parse().map_err(|e: fogforge_core::Error| Error::Usage(e.to_string()))?]
    };
    let weights = WeightVector::from_time_weight(a.w_time).map_err(|e| Error::Usage(e.to_string()))?;
    let (app, devices, norms) = load_target(&a.target)?;
    let seed = ctx.seed();
    let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
    let snapshot = serde_json::json!({
        "strategies": names,
        "scenario": a.target.scenario,
        "app": a.target.app,
        "weights": weights,
    });
    let mut run = ctx.run_dir(&a.out, "baseline", &snapshot, seed)?;
    let mut points = Vec::new();
    for kind in kinds {
        let placement = run_baseline(kind, &app, &devices, seed);
        for record in placement_trajectory(&app, &devices, &placement, norms, weights)? {
            run.metric(&serde_json::json!({ "strategy": kind.name(), "record": record }))?;
        }
        let point = evaluate(&app, &placement, &devices)?;
        println!("{}: (time, cost) = ({}, {})", kind.name(), point.time, point.cost);
        points.push((Some(weights), point));
    }
    run.solutions(&solution_rows(&points))?;
    run.finish()?;
    Ok(())
}

fn evo(ctx: &Context, a: EvoArgs) -> Result<()> {
    let config = EvoConfig {
        population_size: a.population,
        generations: a.generations,
        mutation_prob: a.mutation_prob,
        mutation: match a.mutation {
            Mutation::PerGene => MutationMode::PerGene,
            Mutation::Offspring => MutationMode::Offspring,
        },
        crossover: match a.crossover {
            Crossover::OnePoint => CrossoverKind::OnePoint,
            Crossover::Uniform => CrossoverKind::Uniform,
        },
        seed: ctx.seed(),
        ..EvoConfig::default()
    };
    config.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let (app, devices, norms) = load_target(&a.target)?;
    match a.algorithm {
        Algorithm::Ga => {
            let weights = WeightVector::from_time_weight(a.w_time).map_err(|e| Error::Usage(e.to_string()))?;
            let snapshot = serde_json::json!({ "algorithm": "ga", "evo": config, "weights": weights, "scenario": a.target.scenario, "app": a.target.app });
            let mut run = ctx.run_dir(&a.out, "evo", &snapshot, config.seed)?;
            let result = ga_solve(&app, &devices, weights, norms, &config, &[])?;
            for (generation, best) in result.history.iter().enumerate() {
                run.metric(&serde_json::json!({ "generation": generation, "best_value": best }))?;
            }
            run.solutions(&solution_rows(&[(Some(weights), result.point)]))?;
            run.finish()?;
            println!("ga: value {:.6}; (time, cost) = ({}, {})", result.value, result.point.time, result.point.cost);
        }
        Algorithm::Nsga2 => {
            let snapshot = serde_json::json!({ "algorithm": "nsga2", "evo": config, "scenario": a.target.scenario, "app": a.target.app });
            let mut run = ctx.run_dir(&a.out, "evo", &snapshot, config.seed)?;
            let result = nsga2_solve(&app, &devices, norms, &config, &[])?;
            for stats in &result.history {
                run.metric(stats)?;
            }
            let points: Vec<_> = result.front_points().into_iter().map(|p| (None, p)).collect();
            run.solutions(&solution_rows(&points))?;
            run.finish()?;
            println!("nsga2: {} front points", points.len());
        }
    }
    Ok(())
}

fn oracle(ctx: &Context, a: OracleArgs) -> Result<()> {
    let (app, devices, norms) = load_target(&a.target)?;
    let snapshot = serde_json::json!({ "scenario": a.target.scenario, "app": a.target.app, "cap": a.cap.to_string() });
    let mut run = ctx.run_dir(&a.out, "oracle", &snapshot, ctx.seed())?;
    let result = brute_force(&app, &devices, &[], norms, a.cap).map_err(|e| match e {
        fogforge_core::Error::TooLarge { .. } => Error::Usage(e.to_string()),
        other => other.into(),
    })?;
    run.metric(&serde_json::json!({ "enumerated": result.enumerated.to_string(), "front_size": result.front.len() }))?;
    let points: Vec<_> = result.front_points().into_iter().map(|p| (None, p)).collect();
    run.solutions(&solution_rows(&points))?;
    run.finish()?;
    println!("oracle: {} placements, {} front points", result.enumerated, points.len());
    Ok(())
}

fn cmd_compare(ctx: &Context, a: CompareArgs) -> Result<()> {
    let mut sets: Vec<Series> = Vec::with_capacity(a.runs.len());
    for (i, dir) in a.runs.iter().enumerate() {
        let path = dir.join("solutions.csv");
        if !path.exists() {
            return Err(Error::Schema { path, message: "missing solutions file".into() });
        }
        let rows = read_solutions(&path)?;
        let base = dir.file_name().map_or_else(|| format!("run{i}"), |n| n.to_string_lossy().into_owned());
        let label = if sets.iter().any(|(l, _)| *l == base) { format!("{base}#{i}") } else { base };
        sets.push((label, rows.iter().map(|r| r.point()).collect()));
    }
    let report = compare(&sets);
    let snapshot = serde_json::json!({ "runs": a.runs });
    let mut run = ctx.run_dir(&a.out, "compare", &snapshot, ctx.seed())?;
    let points_path = run.join("compare.csv");
    let mut w = csv::Writer::from_path(&points_path).map_err(|e| Error::csv(&points_path, e))?;
    for p in labeled_points(&sets, &report) {
        w.serialize(p).map_err(|e| Error::csv(&points_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&points_path, e))?;
    run.add_output("compare.csv");
    write_text(&run.join("compare.svg"), &render_svg(&sets))?;
    run.add_output("compare.svg");
    write_json(&run.join("report.json"), &report)?;
    run.add_output("report.json");
    for m in &report.methods {
        run.metric(m)?;
        println!(
            "{}: {} points, {} on joint front, {} dominated by others, hypervolume {:.6}",
            m.label, m.points, m.on_joint_front, m.dominated_by_others, m.hypervolume
        );
    }
    let joint: Vec<_> = report.joint_front.iter().map(|p| (None, *p)).collect();
    run.solutions(&solution_rows(&joint))?;
    run.finish()?;
    Ok(())
}

//! Command-line driver. `run` parses arguments, resolves settings as
//! defaults < config file < flags, executes one subcommand inside a
//! dedicated thread pool and returns the process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    multiplier_attribute_comparison, multiplier_rows, recovery_curve_rows, tertile_attribute_report, tertile_rows,
    threshold_correlations, threshold_summary, MultiplierSummaryRow,
};
use crate::contiguity::{build_contiguity_graph, ContiguityKind, ContiguityRule, SpatialUnit};
use crate::diffusion::{run_diffusion, DiffusionSchedule, StateVector};
use crate::empirical::{
    compute_recovery_duration, durations_to_trajectory, weekly_difference, RecoveryCriterion, RecoveryDurationTable,
    VisitSeries,
};
use crate::error::Error;
use crate::fit::{build_fit_problem, fit_thresholds, random_baseline, BaselineStats, DEFAULT_SEED_CUTOFF_WEEKS};
use crate::ga::GaConfig;
use crate::graph::{graph_metrics, SpatialGraph};
use crate::io;
use crate::multiplier::{
    brute_force_multipliers, default_multiplier_sizes, search_multipliers, MultiplierProblem, MultiplierResult,
    DEFAULT_ENUMERATION_CAP,
};
use crate::synthetic::{generate_instance, GraphKind, SynthSpec};

pub const THREADS_ENV: &str = "RECOVERY_DIFFUSION_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) => match e {
                Error::InvalidConfig(_)
                | Error::InvalidSchedule(_)
                | Error::InvalidSynthSpec(_)
                | Error::InvalidTolerance(_)
                | Error::EnumerationCap { .. } => EXIT_CONFIG,
                Error::Fitness { .. } => EXIT_INTERNAL,
                _ => EXIT_DATA,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "recovery-diffusion", version, about = "Threshold diffusion of recovery on spatial networks")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (also RECOVERY_DIFFUSION_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the contiguity graph and report its metrics.
    BuildGraph(GraphArgs),
    /// Derive recovery durations from daily visit series.
    Durations(DurationArgs),
    /// Fit per-node thresholds to observed recovery durations.
    Fit(FitArgs),
    /// Loss distribution of uniformly random thresholds.
    Baseline(BaselineArgs),
    /// Search recovery multiplier sets for one or more sizes.
    Multipliers(MultiplierArgs),
    /// Threshold statistics, tertiles and attribute comparisons.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic instance with planted thresholds.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct GraphArgs {
    /// GeoJSON feature collection with an "id" property.
    #[arg(long, conflicts_with = "edges")]
    pub geometry: Option<PathBuf>,
    /// Edge list with header src,dst.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Node list with header id (keeps isolated nodes).
    #[arg(long)]
    pub nodes: Option<PathBuf>,
    #[arg(long, value_parser = parse_rule)]
    pub rule: Option<ContiguityKind>,
    #[arg(long)]
    pub snap_tolerance: Option<f64>,
}

fn parse_rule(s: &str) -> Result<ContiguityKind, String> {
    s.parse()
}

#[derive(Debug, Args, Default)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub first_update_week: Option<usize>,
    /// Units recovering faster than this many weeks are seeds.
    #[arg(long)]
    pub seed_cutoff: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct GaArgs {
    #[arg(long)]
    pub population_size: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub crossover_prob: Option<f64>,
    #[arg(long)]
    pub mutation_prob: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate fitness on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct DurationArgs {
    /// Visits with header id,day,visits.
    #[arg(long)]
    pub visits: Option<PathBuf>,
    /// First baseline day (ISO date or index, as in the visit file).
    #[arg(long)]
    pub baseline_start: Option<String>,
    #[arg(long)]
    pub baseline_end: Option<String>,
    #[arg(long)]
    pub recovery_start: Option<String>,
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub persistence_days: Option<usize>,
    #[arg(long)]
    pub ma_halfwidth: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub durations: Option<PathBuf>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub ga: GaArgs,
    /// Random-threshold runs for the baseline (0 skips it).
    #[arg(long)]
    pub baseline_runs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub durations: Option<PathBuf>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CandidatePool {
    #[default]
    All,
    /// Only nodes left unrecovered by the plain simulation.
    Unrecovered,
}

#[derive(Debug, Args)]
pub struct MultiplierArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Thresholds with header id,threshold,is_seed.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Multiplier set size; repeat for several sizes.
    #[arg(long = "size", visible_alias = "N")]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum)]
    pub pool: Option<CandidatePool>,
    /// Enumerate every subset instead of running the GA.
    #[arg(long)]
    pub brute_force: bool,
    #[arg(long)]
    pub enumeration_cap: Option<u128>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[command(flatten)]
    pub ga: GaArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    #[arg(long)]
    pub attributes: Option<PathBuf>,
    /// multipliers.json written by the multipliers command.
    #[arg(long)]
    pub multipliers: Option<PathBuf>,
    /// With a graph and durations, also export the weekly recovery curve.
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub durations: Option<PathBuf>,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long)]
    pub include_seeds: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seed_fraction: Option<f64>,
    #[arg(long)]
    pub threshold_low: Option<f64>,
    #[arg(long)]
    pub threshold_high: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub coupling: Option<f64>,
    /// Drop grid edges with this probability (keeps the graph connected).
    #[arg(long)]
    pub deletion_prob: Option<f64>,
    /// Keep thresholds even when some nodes never recover.
    #[arg(long)]
    pub allow_incomplete: bool,
}

/// GA settings that may be left unset in a config block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaSection {
    pub population_size: Option<usize>,
    pub max_iterations: Option<usize>,
    pub crossover_prob: Option<f64>,
    pub mutation_prob: Option<f64>,
    pub tournament_size: Option<usize>,
    pub elitism_count: Option<usize>,
    pub rng_seed: Option<u64>,
    pub parallel: Option<bool>,
}

impl GaSection {
    fn apply(&self, mut base: GaConfig) -> GaConfig {
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { base.$f = v; })* };
        }
        take!(population_size, max_iterations, crossover_prob, tournament_size, elitism_count, rng_seed, parallel);
        if self.mutation_prob.is_some() {
            base.mutation_prob = self.mutation_prob;
        }
        base
    }
}

/// Contents of the `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub durations: Option<PathBuf>,
    pub visits: Option<PathBuf>,
    pub thresholds: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub multipliers_file: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    /// Overrides the seed of every stage when set.
    pub rng_seed: Option<u64>,
    pub contiguity: Option<ContiguityKind>,
    pub snap_tolerance: Option<f64>,
    pub horizon: Option<usize>,
    pub first_update_week: Option<usize>,
    pub seed_cutoff: Option<f64>,
    pub baseline_runs: Option<usize>,
    pub baseline_start: Option<String>,
    pub baseline_end: Option<String>,
    pub recovery_start: Option<String>,
    pub recovery_ratio: Option<f64>,
    pub persistence_days: Option<usize>,
    pub ma_halfwidth: Option<usize>,
    pub multiplier_sizes: Option<Vec<usize>>,
    pub candidate_pool: Option<CandidatePool>,
    pub enumeration_cap: Option<u128>,
    pub fit: GaSection,
    pub multipliers: GaSection,
    pub synth: Option<SynthSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub const DEFAULT_BASELINE_RUNS: usize = 1000;
pub const STAGE2_MAX_ITERATIONS: usize = 2000;

struct Context {
    config: RunConfig,
    out: PathBuf,
    threads: usize,
    outputs: Vec<String>,
}

impl Context {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_owned());
        self.out.join(name)
    }

    fn schedule(&self, args: &ScheduleArgs) -> CliResult<DiffusionSchedule> {
        let d = DiffusionSchedule::default();
        Ok(DiffusionSchedule::new(
            args.horizon.or(self.config.horizon).unwrap_or(d.horizon),
            args.first_update_week
                .or(self.config.first_update_week)
                .unwrap_or(d.first_update_week),
        )?)
    }

    fn seed_cutoff(&self, args: &ScheduleArgs) -> f64 {
        args.seed_cutoff
            .or(self.config.seed_cutoff)
            .unwrap_or(DEFAULT_SEED_CUTOFF_WEEKS)
    }

    fn ga(&self, base: GaConfig, section: &GaSection, args: &GaArgs) -> CliResult<GaConfig> {
        let mut ga = section.apply(base);
        if let Some(seed) = self.config.rng_seed {
            ga.rng_seed = seed;
        }
        let flags = GaSection {
            population_size: args.population_size,
            max_iterations: args.max_iterations,
            crossover_prob: args.crossover_prob,
            mutation_prob: args.mutation_prob,
            rng_seed: args.seed,
            parallel: args.sequential.then_some(false),
            ..Default::default()
        };
        let ga = flags.apply(ga);
        ga.validate()?;
        Ok(ga)
    }

    fn required(&self, flag: Option<&PathBuf>, key: Option<&PathBuf>, name: &str) -> CliResult<PathBuf> {
        flag.or(key)
            .cloned()
            .ok_or_else(|| CliError::Usage(format!("missing --{name} (or `{}` in the config file)", name.replace('-', "_"))))
    }

    fn graph(&self, args: &GraphArgs) -> CliResult<(SpatialGraph, Option<Vec<SpatialUnit>>, Option<PathBuf>)> {
        let (geometry, edges) = match (&args.geometry, &args.edges) {
            (Some(g), _) => (Some(g.clone()), None),
            (None, Some(e)) => (None, Some(e.clone())),
            (None, None) => (self.config.geometry.clone(), self.config.edges.clone()),
        };
        if let Some(path) = geometry {
            let units = io::read_geojson_units(&path)?;
            let kind = args.rule.or(self.config.contiguity).unwrap_or_default();
            let tolerance = args.snap_tolerance.or(self.config.snap_tolerance).unwrap_or(0.0);
            let g = build_contiguity_graph(&units, ContiguityRule::new(kind).with_tolerance(tolerance))?;
            return Ok((g, Some(units), Some(path)));
        }
        let Some(edges) = edges else {
            return Err(CliError::Usage("missing graph input: give --geometry or --edges".into()));
        };
        let nodes = args.nodes.clone().or_else(|| self.config.nodes.clone());
        Ok((io::read_edge_list(&edges, nodes.as_deref())?, None, None))
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    arguments: &'a [String],
    started_at: String,
    elapsed_seconds: f64,
    threads: usize,
    settings: serde_json::Value,
    outputs: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    timing: Option<serde_json::Value>,
}

/// Settings and timing recorded for a finished command.
struct Outcome {
    settings: serde_json::Value,
    timing: Option<serde_json::Value>,
}

fn json<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable")
}

/// Runs the CLI on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let printable: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, &printable) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>, config: &RunConfig) -> CliResult<usize> {
    if let Some(n) = flag {
        return Ok(n);
    }
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v} is not a thread count")));
    }
    Ok(config
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

pub fn execute(cli: Cli, arguments: &[String]) -> CliResult<()> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let threads = thread_count(cli.threads, &config)?;
    if threads == 0 {
        return Err(CliError::Config("thread count must be positive".into()));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();
    let mut ctx = Context {
        config,
        out,
        threads,
        outputs: Vec::new(),
    };
    let (name, outcome) = pool.install(|| -> CliResult<(&'static str, Outcome)> {
        Ok(match &cli.command {
            Command::BuildGraph(a) => ("build-graph", build_graph(&mut ctx, a)?),
            Command::Durations(a) => ("durations", durations(&mut ctx, a)?),
            Command::Fit(a) => ("fit", fit(&mut ctx, a)?),
            Command::Baseline(a) => ("baseline", baseline(&mut ctx, a)?),
            Command::Multipliers(a) => ("multipliers", multipliers(&mut ctx, a)?),
            Command::Analyze(a) => ("analyze", analyze(&mut ctx, a)?),
            Command::Synth(a) => ("synth", synth(&mut ctx, a)?),
        })
    })?;
    let manifest_name = format!("{name}.manifest.json");
    let outputs = std::mem::take(&mut ctx.outputs);
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: name,
        arguments,
        started_at,
        elapsed_seconds: clock.elapsed().as_secs_f64(),
        threads: ctx.threads,
        settings: outcome.settings,
        outputs: &outputs,
        timing: outcome.timing,
    };
    io::write_json(&ctx.out.join(manifest_name), &manifest)?;
    Ok(())
}

fn build_graph(ctx: &mut Context, args: &GraphArgs) -> CliResult<Outcome> {
    let (g, units, _) = ctx.graph(args)?;
    let metrics = graph_metrics(&g)?;
    io::write_edge_list(&ctx.path("edges.csv"), &g)?;
    io::write_nodes(&ctx.path("nodes.csv"), &g)?;
    let report_path = ctx.path("graph_report.json");
    let line = serde_json::to_string(&metrics).expect("serializable");
    io::write_atomic(&report_path, |w| writeln!(w, "{line}"))?;
    println!("n = {}", metrics.n);
    println!("m = {}", metrics.m);
    println!("k = {:.3}", metrics.avg_degree);
    println!("d = {:.5}", metrics.density);
    let rule = units.map(|_| args.rule.or(ctx.config.contiguity).unwrap_or_default());
    Ok(Outcome {
        settings: serde_json::json!({ "rule": rule, "snap_tolerance": args.snap_tolerance.or(ctx.config.snap_tolerance) }),
        timing: None,
    })
}

fn durations(ctx: &mut Context, args: &DurationArgs) -> CliResult<Outcome> {
    let visits = ctx.required(args.visits.as_ref(), ctx.config.visits.as_ref(), "visits")?;
    let label = |flag: &Option<String>, key: &Option<String>, name: &str| {
        flag.clone()
            .or_else(|| key.clone())
            .ok_or_else(|| CliError::Usage(format!("missing --{name}")))
    };
    let baseline_start = label(&args.baseline_start, &ctx.config.baseline_start, "baseline-start")?;
    let baseline_end = label(&args.baseline_end, &ctx.config.baseline_end, "baseline-end")?;
    let recovery_start = label(&args.recovery_start, &ctx.config.recovery_start, "recovery-start")?;
    let d = RecoveryCriterion::default();
    let criterion = RecoveryCriterion {
        ratio: args.ratio.or(ctx.config.recovery_ratio).unwrap_or(d.ratio),
        persistence_days: args.persistence_days.or(ctx.config.persistence_days).unwrap_or(d.persistence_days),
        ma_halfwidth: args.ma_halfwidth.or(ctx.config.ma_halfwidth).unwrap_or(d.ma_halfwidth),
        horizon_weeks: ctx.config.horizon.unwrap_or(d.horizon_weeks),
    };
    let table = io::read_visits(&visits)?;
    let baseline = table.origin.offset(&baseline_start)?..=table.origin.offset(&baseline_end)?;
    let start = table.origin.offset(&recovery_start)?;
    let rows = table
        .series
        .into_iter()
        .map(|(id, visits)| {
            let series = VisitSeries {
                visits,
                baseline: baseline.clone(),
                recovery_start_day: start,
            };
            compute_recovery_duration(&series, &criterion)
                .map(|d| (id.clone(), d))
                .map_err(|e| match e {
                    Error::InvalidSeries(msg) => Error::InvalidSeries(format!("`{id}`: {msg}")),
                    other => other,
                })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let durations = RecoveryDurationTable::new(rows)?;
    io::write_durations(&ctx.path("durations.csv"), &durations)?;
    println!("durations: {} units", durations.len());
    Ok(Outcome {
        settings: serde_json::json!({
            "visits": visits,
            "baseline_start": baseline_start,
            "baseline_end": baseline_end,
            "recovery_start": recovery_start,
            "criterion": criterion,
        }),
        timing: None,
    })
}

#[derive(Debug, Serialize)]
struct FitReport<'a> {
    nodes: usize,
    seeds: usize,
    free_nodes: usize,
    initial_best_loss: f64,
    final_loss: usize,
    generations: usize,
    evaluations: usize,
    generations_file: &'static str,
    baseline: Option<&'a BaselineStats>,
    /// Final loss as a fraction of the baseline mean.
    loss_ratio_to_baseline: Option<f64>,
    warnings: &'a [String],
}

fn fit(ctx: &mut Context, args: &FitArgs) -> CliResult<Outcome> {
    let (g, _, _) = ctx.graph(&args.graph)?;
    let durations_path = ctx.required(args.durations.as_ref(), ctx.config.durations.as_ref(), "durations")?;
    let durations = io::read_durations(&durations_path)?;
    let schedule = ctx.schedule(&args.schedule)?;
    let cutoff = ctx.seed_cutoff(&args.schedule);
    let ga = ctx.ga(GaConfig::default(), &ctx.config.fit, &args.ga)?;
    let runs = args.baseline_runs.or(ctx.config.baseline_runs).unwrap_or(DEFAULT_BASELINE_RUNS);

    let problem = build_fit_problem(&g, &durations, cutoff, schedule)?;
    let result = fit_thresholds(&problem, &ga)?;
    let baseline = if runs > 0 {
        Some(random_baseline(&problem, runs, ga.rng_seed.wrapping_add(1))?)
    } else {
        None
    };
    let simulated = problem.simulate(&result.thresholds)?;
    let curve = weekly_difference(problem.empirical(), &simulated)?;

    io::write_thresholds(&ctx.path("thresholds.csv"), &g, &result.thresholds)?;
    io::write_generations(&ctx.path("fit_generations.csv"), &result.ga.generations)?;
    io::write_trajectory(&ctx.path("empirical_trajectory.csv"), g.ids(), problem.empirical())?;
    io::write_trajectory(&ctx.path("simulated_trajectory.csv"), g.ids(), &simulated)?;
    io::write_csv(&ctx.path("recovery_curve.csv"), recovery_curve_rows(&curve))?;
    let report = FitReport {
        nodes: g.len(),
        seeds: problem.seed_nodes().count(),
        free_nodes: problem.free_nodes().len(),
        initial_best_loss: result.ga.generations[0].best_fitness,
        final_loss: result.final_loss,
        generations: result.ga.generations.len(),
        evaluations: result.ga.evaluations,
        generations_file: "fit_generations.csv",
        baseline: baseline.as_ref(),
        loss_ratio_to_baseline: baseline
            .as_ref()
            .filter(|b| b.mean > 0.0)
            .map(|b| result.final_loss as f64 / b.mean),
        warnings: problem.warnings(),
    };
    io::write_json(&ctx.path("fit_report.json"), &report)?;
    if let Some(b) = &baseline {
        io::write_csv(&ctx.path("baseline_losses.csv"), loss_rows(b))?;
        println!("baseline mean loss = {:.3} over {} runs", b.mean, b.runs);
    }
    println!("final loss = {}", result.final_loss);
    let performance = result.ga.performance().ok();
    Ok(Outcome {
        settings: serde_json::json!({
            "durations": durations_path,
            "schedule": schedule,
            "seed_cutoff": cutoff,
            "ga": ga,
            "baseline_runs": runs,
        }),
        timing: Some(serde_json::json!({
            "ga_seconds": result.ga.total_seconds(),
            "performance": performance,
        })),
    })
}

#[derive(Serialize)]
struct LossRow {
    run: usize,
    loss: usize,
}

fn loss_rows(b: &BaselineStats) -> Vec<LossRow> {
    b.losses.iter().enumerate().map(|(run, &loss)| LossRow { run, loss }).collect()
}

fn baseline(ctx: &mut Context, args: &BaselineArgs) -> CliResult<Outcome> {
    let (g, _, _) = ctx.graph(&args.graph)?;
    let durations_path = ctx.required(args.durations.as_ref(), ctx.config.durations.as_ref(), "durations")?;
    let durations = io::read_durations(&durations_path)?;
    let schedule = ctx.schedule(&args.schedule)?;
    let cutoff = ctx.seed_cutoff(&args.schedule);
    let runs = args.runs.or(ctx.config.baseline_runs).unwrap_or(DEFAULT_BASELINE_RUNS);
    if runs == 0 {
        return Err(CliError::Usage("--runs must be positive".into()));
    }
    let seed = args.seed.or(ctx.config.rng_seed).unwrap_or(0);
    let problem = build_fit_problem(&g, &durations, cutoff, schedule)?;
    let stats = random_baseline(&problem, runs, seed)?;
    io::write_json(&ctx.path("baseline.json"), &stats)?;
    io::write_csv(&ctx.path("baseline_losses.csv"), loss_rows(&stats))?;
    println!("baseline mean loss = {:.3} (sd {:.3}) over {runs} runs", stats.mean, stats.std_dev);
    Ok(Outcome {
        settings: serde_json::json!({ "durations": durations_path, "schedule": schedule, "seed_cutoff": cutoff, "runs": runs, "rng_seed": seed }),
        timing: None,
    })
}

fn multipliers(ctx: &mut Context, args: &MultiplierArgs) -> CliResult<Outcome> {
    let (g, _, geometry) = ctx.graph(&args.graph)?;
    let tau_path = ctx.required(args.thresholds.as_ref(), ctx.config.thresholds.as_ref(), "thresholds")?;
    let tau = io::read_thresholds(&tau_path, &g)?;
    let schedule = ctx.schedule(&args.schedule)?;
    let base = GaConfig {
        max_iterations: STAGE2_MAX_ITERATIONS,
        ..Default::default()
    };
    let ga = ctx.ga(base, &ctx.config.multipliers, &args.ga)?;
    let pool_kind = args.pool.or(ctx.config.candidate_pool).unwrap_or_default();
    let cap = args.enumeration_cap.or(ctx.config.enumeration_cap).unwrap_or(DEFAULT_ENUMERATION_CAP);

    let pool: Vec<usize> = match pool_kind {
        CandidatePool::All => (0..g.len()).collect(),
        CandidatePool::Unrecovered => {
            let plain = run_diffusion(&g, &tau, &StateVector::affected(g.len()), &schedule)?;
            (0..g.len()).filter(|&i| !plain.final_state()[i]).collect()
        }
    };
    let sizes = if !args.sizes.is_empty() {
        args.sizes.clone()
    } else if let Some(s) = &ctx.config.multiplier_sizes {
        s.clone()
    } else {
        default_multiplier_sizes(pool.len())
    };
    if let Some(&bad) = sizes.iter().find(|&&n| n == 0 || n > pool.len()) {
        return Err(CliError::Config(format!(
            "multiplier size {bad} must lie in [1, {}] for the {pool_kind:?} pool",
            pool.len()
        )));
    }

    let mut results: Vec<MultiplierResult> = Vec::new();
    let mut seconds = Vec::new();
    for &size in &sizes {
        let problem = MultiplierProblem::with_pool(&g, &tau, schedule, size, pool.clone())?;
        let result = if args.brute_force {
            brute_force_multipliers(&problem, cap)?
        } else {
            search_multipliers(&problem, &ga)?
        };
        io::write_multiplier_selection(&ctx.path(&format!("multipliers_N{size}.csv")), &g, &result.members)?;
        if let Some(run) = &result.ga {
            io::write_generations(&ctx.path(&format!("multiplier_generations_N{size}.csv")), &run.generations)?;
            seconds.push(serde_json::json!({ "size": size, "ga_seconds": run.total_seconds() }));
        }
        if let Some(input) = &geometry {
            io::write_multiplier_geojson(input, &ctx.path(&format!("multipliers_N{size}.geojson")), &result.ids)?;
        }
        match result.increment_rate {
            Some(rate) => println!(
                "N = {size}: recovered {} -> {} ({rate:+.2}%)",
                result.recovered_without, result.recovered_with
            ),
            None => println!("N = {size}: recovered {} -> {}", result.recovered_without, result.recovered_with),
        }
        results.push(result);
    }
    io::write_json(&ctx.path("multipliers.json"), &results)?;
    io::write_csv(&ctx.path("multiplier_summary.csv"), summary_rows(&results))?;
    Ok(Outcome {
        settings: serde_json::json!({
            "thresholds": tau_path,
            "schedule": schedule,
            "sizes": sizes,
            "pool": pool_kind,
            "brute_force": args.brute_force,
            "enumeration_cap": cap.to_string(),
            "ga": ga,
        }),
        timing: (!seconds.is_empty()).then_some(serde_json::Value::Array(seconds)),
    })
}

fn summary_rows(results: &[MultiplierResult]) -> Vec<MultiplierSummaryRow> {
    results
        .iter()
        .map(|r| MultiplierSummaryRow {
            size: r.size,
            recovered_without: r.recovered_without,
            recovered_with: r.recovered_with,
            increment_rate: r.increment_rate,
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct ThresholdFileRow {
    id: String,
    threshold: f64,
    is_seed: bool,
}

fn analyze(ctx: &mut Context, args: &AnalyzeArgs) -> CliResult<Outcome> {
    let tau_path = ctx.required(args.thresholds.as_ref(), ctx.config.thresholds.as_ref(), "thresholds")?;
    let attrs_path = ctx.required(args.attributes.as_ref(), ctx.config.attributes.as_ref(), "attributes")?;
    let attrs = io::read_attributes(&attrs_path)?;
    let rows: Vec<ThresholdFileRow> = csv::Reader::from_path(&tau_path)
        .and_then(|mut r| r.deserialize().collect())
        .map_err(|e| Error::Parse {
            path: tau_path.clone(),
            message: e.to_string(),
        })?;
    let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
    let tau = crate::diffusion::ThresholdVector::with_seeds(
        rows.iter().map(|r| r.threshold).collect(),
        rows.iter().map(|r| r.is_seed).collect(),
    )?;

    let summary = threshold_summary(&tau, args.include_seeds)?;
    let summary_all = threshold_summary(&tau, true)?;
    let tertiles = tertile_attribute_report(&ids, &tau, &attrs, args.include_seeds)?;
    let correlations = threshold_correlations(&ids, &tau, &attrs, args.include_seeds)?;
    io::write_csv(&ctx.path("tertile_attributes.csv"), tertile_rows(&tertiles, &ids, &tau, &attrs)?)?;

    let multiplier_path = args.multipliers.clone().or_else(|| ctx.config.multipliers_file.clone());
    let comparison = match &multiplier_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let results: Vec<MultiplierResult> = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?;
            let sets: Vec<(usize, Vec<String>)> = results.iter().map(|r| (r.size, r.ids.clone())).collect();
            io::write_csv(&ctx.path("multiplier_attributes.csv"), multiplier_rows(&ids, &sets, &attrs)?)?;
            io::write_csv(&ctx.path("multiplier_summary.csv"), summary_rows(&results))?;
            Some(multiplier_attribute_comparison(&ids, &sets, &attrs)?)
        }
        None => None,
    };

    let durations_path = args.durations.clone().or_else(|| ctx.config.durations.clone());
    let has_graph = args.graph.geometry.is_some()
        || args.graph.edges.is_some()
        || ctx.config.geometry.is_some()
        || ctx.config.edges.is_some();
    if let (Some(dp), true) = (&durations_path, has_graph) {
        let (g, _, _) = ctx.graph(&args.graph)?;
        let schedule = ctx.schedule(&args.schedule)?;
        let aligned = io::read_thresholds(&tau_path, &g)?;
        let empirical = durations_to_trajectory(&aligned_durations(&io::read_durations(dp)?, &g)?, schedule.horizon)?;
        let simulated = run_diffusion(&g, &aligned, &StateVector::affected(g.len()), &schedule)?;
        io::write_csv(&ctx.path("recovery_curve.csv"), recovery_curve_rows(&weekly_difference(&empirical, &simulated)?))?;
    }

    let report = serde_json::json!({
        "threshold_summary": summary,
        "threshold_summary_with_seeds": summary_all,
        "tertiles": tertiles,
        "correlations": correlations,
        "multipliers": comparison,
    });
    io::write_json(&ctx.path("analysis_report.json"), &report)?;
    println!(
        "thresholds: mean {:.3}, variance {:.3} over {} nodes",
        summary.mean, summary.variance, summary.count
    );
    Ok(Outcome {
        settings: serde_json::json!({
            "thresholds": tau_path,
            "attributes": attrs_path,
            "multipliers": multiplier_path,
            "include_seeds": args.include_seeds,
        }),
        timing: None,
    })
}

/// Durations reordered to the graph's node order.
fn aligned_durations(table: &RecoveryDurationTable, g: &SpatialGraph) -> Result<RecoveryDurationTable, Error> {
    let values = table.aligned_to(g)?;
    RecoveryDurationTable::new(g.ids().iter().cloned().zip(values))
}

fn synth(ctx: &mut Context, args: &SynthArgs) -> CliResult<Outcome> {
    let mut spec = ctx.config.synth.clone().unwrap_or_default();
    if let Some(seed) = ctx.config.rng_seed {
        spec.rng_seed = seed;
    }
    if let Some(h) = ctx.config.horizon {
        spec.schedule.horizon = h;
    }
    if let Some(w) = ctx.config.first_update_week {
        spec.schedule.first_update_week = w;
    }
    macro_rules! take {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = args.$flag { spec.$field = v; })* };
    }
    take!(n => n, seed => rng_seed, seed_fraction => seed_fraction, threshold_low => threshold_low,
          threshold_high => threshold_high, coupling => attribute_coupling);
    if let Some(p) = args.deletion_prob {
        spec.graph = GraphKind::PerturbedGrid { deletion_prob: p };
    }
    if args.allow_incomplete {
        spec.require_full_recovery = false;
    }
    let inst = generate_instance(&spec)?;
    io::write_edge_list(&ctx.path("edges.csv"), &inst.graph)?;
    io::write_nodes(&ctx.path("nodes.csv"), &inst.graph)?;
    io::write_geojson_units(&ctx.path("units.geojson"), &inst.units)?;
    io::write_durations(&ctx.path("durations.csv"), &inst.durations)?;
    io::write_attributes(&ctx.path("attributes.csv"), &inst.attributes)?;
    io::write_thresholds(&ctx.path("planted_thresholds.csv"), &inst.graph, &inst.planted)?;
    io::write_trajectory(&ctx.path("planted_trajectory.csv"), inst.graph.ids(), &inst.trajectory)?;
    io::write_json(
        &ctx.path("instance.json"),
        &serde_json::json!({
            "spec": spec,
            "nodes": inst.graph.len(),
            "edges": inst.graph.edge_count(),
            "seeds": inst.planted.seed_count(),
            "planted_thresholds": inst.planted.values(),
        }),
    )?;
    let unrecovered = inst.trajectory.final_state().iter().filter(|r| !**r).count();
    println!(
        "synthetic instance: {} nodes, {} edges, {} seeds, {unrecovered} unrecovered at the horizon",
        inst.graph.len(),
        inst.graph.edge_count(),
        inst.planted.seed_count()
    );
    Ok(Outcome {
        settings: json(&spec),
        timing: None,
    })
}

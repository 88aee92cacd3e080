//! Command-line front end: solve curve barycenters, export process
//! representations and cost reports, re-root processes, run the randomized
//! cross-check suite, and render simple SVG plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::barycenter::{
    centroid_grid, curve_barycenter_with, finite_barycenter, BarycenterError,
    BarycenterProblem, BarycenterResult, SolverOptions, SupportMode,
};
use crate::io::{self, IoError};
use crate::measures::{DiscreteMeasure, MeasureCurve, MeasureError, SamplingStrategy};
use crate::oracle::{
    certify_barycenter, enumerate_couplings, solve_multimarginal, MultiMarginalCost,
    MultiMarginalInstance, OracleError,
};
use crate::ot::{w2, w2_1d, OtError};
use crate::process::{
    build_process, mk_cost, reroot, ProcessError, ProcessRepresentation,
};
use crate::tolerances;

#[derive(Debug, Parser)]
#[command(
    name = "curvebary",
    version,
    about = "Wasserstein-2 barycenters of measure curves and optimal process couplings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the barycenter of a measure curve over a refinement schedule.
    Barycenter(SolveArgs),
    /// Solve the barycenter, then export the process representation and its
    /// cost report at the finest schedule entry.
    Process(SolveArgs),
    /// Re-root a solved process at one of its grid nodes.
    Reroot(RerootArgs),
    /// Run the randomized cross-check suite, optionally certifying a
    /// directory of multi-marginal instance files.
    Validate(ValidateArgs),
    /// Render sample paths of a process, or a measure histogram, as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Curve JSON input.
    #[arg(long)]
    pub curve: PathBuf,
    /// Comma-separated grid sizes, coarsest first.
    #[arg(long, value_delimiter = ',', required = true)]
    pub schedule: Vec<usize>,
    /// Time-grid sampling strategy.
    #[arg(long, value_enum, default_value_t = StrategyArg::Uniform)]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RerootArgs {
    /// Process JSON input.
    #[arg(long)]
    pub process: PathBuf,
    /// Grid node to re-root at.
    #[arg(long)]
    pub t0: f64,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Directory of multi-marginal instance JSON files to certify.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Process JSON input (sample-path plot).
    #[arg(long, conflicts_with = "measure", required_unless_present = "measure")]
    pub process: Option<PathBuf>,
    /// Measure JSON input (histogram or scatter plot).
    #[arg(long)]
    pub measure: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Named tolerance override NAME=VALUE (repeatable).
    #[arg(long = "tol", value_parser = parse_tolerance)]
    pub tol: Vec<(String, f64)>,
    /// Seed for randomized validation instances.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Uniform,
    #[value(name = "prefer_ak")]
    PreferAk,
}

fn parse_tolerance(raw: &str) -> Result<(String, f64), String> {
    let (name, value) = raw
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got {raw:?}"))?;
    if name.is_empty() {
        return Err("tolerance name is empty".to_string());
    }
    let value: f64 = value
        .parse()
        .map_err(|_| format!("tolerance value {value:?} is not a number"))?;
    if !value.is_finite() || value <= 0.0 {
        return Err(format!("tolerance {name} must be positive, got {value}"));
    }
    Ok((name.to_string(), value))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Barycenter,
    Process,
    Reroot,
    Validate,
    Plot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotSource {
    Process,
    Measure,
}

/// Fully resolved invocation: which command, its input and output paths,
/// schedule, strategy, named tolerances, and the instance seed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandName,
    pub input_path: Option<PathBuf>,
    pub output_path: PathBuf,
    pub schedule: Vec<usize>,
    pub strategy: SamplingStrategy,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: u64,
    pub t0: Option<f64>,
    pub plot_source: Option<PlotSource>,
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let common = match &cli.command {
            Command::Barycenter(a) | Command::Process(a) => &a.common,
            Command::Reroot(a) => &a.common,
            Command::Validate(a) => &a.common,
            Command::Plot(a) => &a.common,
        };
        let mut map = BTreeMap::new();
        for (name, value) in &common.tol {
            if !value.is_finite() || *value <= 0.0 {
                return Err(CliError::Usage(format!(
                    "tolerance {name} must be positive, got {value}"
                )));
            }
            map.insert(name.clone(), *value);
        }
        let mut config = RunConfig {
            command: CommandName::Validate,
            input_path: None,
            output_path: common.out.clone(),
            schedule: Vec::new(),
            strategy: SamplingStrategy::Uniform,
            tolerances: map,
            seed: common.seed,
            t0: None,
            plot_source: None,
        };
        match &cli.command {
            Command::Barycenter(a) | Command::Process(a) => {
                config.command = if matches!(cli.command, Command::Barycenter(_)) {
                    CommandName::Barycenter
                } else {
                    CommandName::Process
                };
                if a.schedule.is_empty() {
                    return Err(CliError::Usage("schedule must be nonempty".to_string()));
                }
                config.input_path = Some(a.curve.clone());
                config.schedule = a.schedule.clone();
                config.strategy = match a.strategy {
                    StrategyArg::Uniform => SamplingStrategy::Uniform,
                    StrategyArg::PreferAk => SamplingStrategy::PreferBoundedDensity,
                };
            }
            Command::Reroot(a) => {
                config.command = CommandName::Reroot;
                config.input_path = Some(a.process.clone());
                config.t0 = Some(a.t0);
            }
            Command::Validate(a) => {
                config.command = CommandName::Validate;
                config.input_path = a.instances.clone();
            }
            Command::Plot(a) => {
                config.command = CommandName::Plot;
                match (&a.process, &a.measure) {
                    (Some(path), None) => {
                        config.input_path = Some(path.clone());
                        config.plot_source = Some(PlotSource::Process);
                    }
                    (None, Some(path)) => {
                        config.input_path = Some(path.clone());
                        config.plot_source = Some(PlotSource::Measure);
                    }
                    _ => {
                        return Err(CliError::Usage(
                            "plot needs exactly one of --process or --measure".to_string(),
                        ))
                    }
                }
            }
        }
        Ok(config)
    }

    fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Barycenter(#[from] BarycenterError),
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("validation failed: {}", failed.join(", "))]
    Validation { failed: Vec<String> },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io(IoError::Parse { .. }) => "parse",
            CliError::Io(IoError::Read { .. } | IoError::Write { .. }) => "io",
            CliError::Io(_) | CliError::Measure(_) => "parse",
            CliError::Ot(_)
            | CliError::Barycenter(_)
            | CliError::Process(_)
            | CliError::Oracle(_) => "solver",
            CliError::Validation { .. } => "validation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

/// Executes the parsed command, writes its artifacts under `--out`, and
/// returns a machine-readable summary for stdout.
pub fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    let config = RunConfig::from_cli(cli)?;
    fs::create_dir_all(&config.output_path).map_err(|source| {
        IoError::Write {
            path: config.output_path.display().to_string(),
            source,
        }
    })?;
    match config.command {
        CommandName::Barycenter => run_barycenter(&config),
        CommandName::Process => run_process(&config),
        CommandName::Reroot => run_reroot(&config),
        CommandName::Validate => run_validate(&config),
        CommandName::Plot => run_plot(&config),
    }
}

fn solver_options(config: &RunConfig) -> SolverOptions {
    let mut opts = SolverOptions::default();
    opts.movement_tol = config.tolerance("movement", tolerances::FREE_SUPPORT_MOVEMENT);
    opts
}

fn input(config: &RunConfig) -> &Path {
    config
        .input_path
        .as_deref()
        .expect("commands with a fixed input always set it")
}

fn run_barycenter(config: &RunConfig) -> Result<serde_json::Value, CliError> {
    let curve = io::load_curve(input(config))?;
    let (result, log) =
        curve_barycenter_with(&curve, &config.schedule, config.strategy, &solver_options(config))?;
    let measure_path = config.output_path.join("barycenter.json");
    io::save_measure(&measure_path, &result.measure)?;
    let log_path = config.output_path.join("convergence.csv");
    io::write_convergence_csv(&log_path, &log)?;
    Ok(json!({
        "status": "ok",
        "command": "barycenter",
        "objective": result.objective,
        "fixed_point_residual": result.fixed_point_residual,
        "support_size": result.measure.len(),
        "artifacts": [
            measure_path.display().to_string(),
            log_path.display().to_string(),
        ],
    }))
}

fn run_process(config: &RunConfig) -> Result<serde_json::Value, CliError> {
    let curve = io::load_curve(input(config))?;
    let (result, _log) =
        curve_barycenter_with(&curve, &config.schedule, config.strategy, &solver_options(config))?;
    let finest = *config.schedule.last().expect("schedule validated nonempty");
    let grid = curve.sample_times(finest, config.strategy)?;
    let proc = build_process(&result, &grid)?;
    let report = mk_cost(&proc)?;
    let process_path = config.output_path.join("process.json");
    io::save_process(&process_path, &proc)?;
    let report_path = config.output_path.join("cost_report.json");
    io::save_json(&report_path, &report)?;
    let paths_path = config.output_path.join("sample_paths.csv");
    io::write_sample_paths_csv(&paths_path, &proc)?;
    Ok(json!({
        "status": "ok",
        "command": "process",
        "mk_cost": report.mk_cost,
        "lower_bound": report.lower_bound,
        "monge_certified": report.monge_certified,
        "artifacts": [
            process_path.display().to_string(),
            report_path.display().to_string(),
            paths_path.display().to_string(),
        ],
    }))
}

fn run_reroot(config: &RunConfig) -> Result<serde_json::Value, CliError> {
    let proc = io::load_process(input(config))?;
    let t0 = config.t0.expect("reroot always sets t0");
    let rerooted = reroot(&proc, t0)?;
    let report = mk_cost(&rerooted)?;
    let out_path = config.output_path.join("rerooted_process.json");
    io::save_process(&out_path, &rerooted)?;
    Ok(json!({
        "status": "ok",
        "command": "reroot",
        "t0": t0,
        "mk_cost": report.mk_cost,
        "artifacts": [out_path.display().to_string()],
    }))
}

#[derive(Debug, Serialize)]
struct CheckReport {
    name: String,
    cases: usize,
    residual: f64,
    tolerance: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct InstanceReport {
    file: String,
    certified: bool,
    value_gap: f64,
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    seed: u64,
    tolerances: BTreeMap<String, f64>,
    checks: Vec<CheckReport>,
    instances: Vec<InstanceReport>,
    passed: bool,
}

fn random_measure(rng: &mut ChaCha8Rng, dim: usize, max_atoms: usize) -> DiscreteMeasure {
    let k = rng.gen_range(1..=max_atoms);
    let points: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.into_iter().map(|w| w / total).collect();
    DiscreteMeasure::new(points, weights).expect("randomly generated atoms are valid")
}

fn random_weights(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn grid_barycenter(
    marginals: &[DiscreteMeasure],
    weights: &[f64],
) -> Result<BarycenterResult, BarycenterError> {
    let grid = centroid_grid(marginals, weights)?;
    finite_barycenter(&BarycenterProblem::new(
        marginals.to_vec(),
        weights.to_vec(),
        SupportMode::FixedGrid(grid),
    )?)
}

fn run_validate(config: &RunConfig) -> Result<serde_json::Value, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let agreement = config.tolerance("agreement", tolerances::SOLVER_AGREEMENT);
    let certify_tol = config.tolerance("certify", 1e-6);
    let mut checks: Vec<CheckReport> = Vec::new();

    // Quantile closed form against the LP on random 1d pairs.
    let mut residual = 0.0f64;
    let cases = 40;
    for _ in 0..cases {
        let mu = random_measure(&mut rng, 1, 5);
        let nu = random_measure(&mut rng, 1, 5);
        let (lp_cost, _) = w2(&mu, &nu)?;
        let (qf_cost, _) = w2_1d(&mu, &nu)?;
        residual = residual.max((lp_cost - qf_cost).abs());
    }
    checks.push(CheckReport {
        name: "w2_matches_quantile_form".to_string(),
        cases,
        residual,
        tolerance: agreement,
        passed: residual <= agreement,
    });

    // Vertex enumeration against the LP on random tiny pairs; the first
    // optimal plan is exported as a coupling CSV sample.
    let mut residual = 0.0f64;
    let cases = 30;
    let mut sample_written = false;
    for case in 0..cases {
        let dim = 1 + case % 2;
        let mu = random_measure(&mut rng, dim, 3);
        let nu = random_measure(&mut rng, dim, 3);
        let (lp_cost, plan) = w2(&mu, &nu)?;
        let best = enumerate_couplings(&mu, &nu)?
            .iter()
            .map(|v| v.cost())
            .fold(f64::INFINITY, f64::min);
        residual = residual.max((lp_cost - best).abs());
        if !sample_written {
            io::write_coupling_csv(&config.output_path.join("coupling_sample.csv"), &plan)?;
            sample_written = true;
        }
    }
    checks.push(CheckReport {
        name: "w2_matches_vertex_enumeration".to_string(),
        cases,
        residual,
        tolerance: agreement,
        passed: residual <= agreement,
    });

    // Convexity of the squared distance under mixtures of the source.
    let mut residual = 0.0f64;
    let cases = 30;
    for case in 0..cases {
        let dim = 1 + case % 2;
        let a = random_measure(&mut rng, dim, 4);
        let b = random_measure(&mut rng, dim, 4);
        let nu = random_measure(&mut rng, dim, 4);
        let s: f64 = rng.gen_range(0.0..1.0);
        let mix = DiscreteMeasure::mixture(&a, &b, s)?;
        let (lhs, _) = w2(&mix, &nu)?;
        let (ca, _) = w2(&a, &nu)?;
        let (cb, _) = w2(&b, &nu)?;
        residual = residual.max((lhs - ((1.0 - s) * ca + s * cb)).max(0.0));
    }
    checks.push(CheckReport {
        name: "mixture_convexity".to_string(),
        cases,
        residual,
        tolerance: agreement,
        passed: residual <= agreement,
    });

    // Barycenter versus the exhaustive multi-marginal optimum.
    let mut residual = 0.0f64;
    let mut all_certified = true;
    let cases = 12;
    for case in 0..cases {
        let dim = 1 + case % 2;
        let m = 2 + case % 2;
        let marginals: Vec<DiscreteMeasure> =
            (0..m).map(|_| random_measure(&mut rng, dim, 4)).collect();
        let weights = random_weights(&mut rng, m);
        let instance = MultiMarginalInstance::new(marginals.clone(), weights.clone())?;
        let bary = grid_barycenter(&marginals, &weights)?;
        let (value, _) = solve_multimarginal(&instance, MultiMarginalCost::Variance)?;
        residual = residual.max((value - bary.objective).abs());
        all_certified &= certify_barycenter(&instance, &bary)?;
    }
    checks.push(CheckReport {
        name: "multimarginal_certification".to_string(),
        cases,
        residual,
        tolerance: certify_tol,
        passed: all_certified && residual <= certify_tol,
    });

    // Re-rooting: identity at the root, marginals preserved, cost unchanged.
    let mut identity_gap = 0.0f64;
    let mut marginal_gap = 0.0f64;
    let mut cost_gap = 0.0f64;
    let cases = 5;
    for _ in 0..cases {
        let profile = random_measure(&mut rng, 1, 4);
        let samples = (0..=4)
            .map(|j| {
                let t = j as f64 / 4.0;
                Ok(crate::measures::CurveSample {
                    t,
                    measure: profile.translate(&[t])?,
                    density: None,
                })
            })
            .collect::<Result<Vec<_>, MeasureError>>()?;
        let curve = MeasureCurve::new(samples, crate::measures::Interpolation::Nearest)?;
        let (result, _) = curve_barycenter_with(
            &curve,
            &[4],
            SamplingStrategy::Uniform,
            &solver_options(config),
        )?;
        let grid = curve.sample_times(4, SamplingStrategy::Uniform)?;
        let proc = build_process(&result, &grid)?;
        let report = mk_cost(&proc)?;
        let rerooted = reroot(&proc, 0.5)?;
        let root = rerooted
            .time_maps()
            .iter()
            .find(|(t, _)| (*t - 0.5).abs() <= 1e-12)
            .expect("grid contains the reroot node");
        for (x, y) in rerooted.base().points().iter().zip(root.1.images()) {
            identity_gap = identity_gap.max(crate::measures::sq_dist(x, y).sqrt());
        }
        for ((_, a), (_, b)) in rerooted.time_maps().iter().zip(proc.time_maps()) {
            let (gap, _) = w2(&a.push_forward(), &b.push_forward())?;
            marginal_gap = marginal_gap.max(gap.max(0.0).sqrt());
        }
        let rerooted_report = mk_cost(&rerooted)?;
        cost_gap = cost_gap.max((rerooted_report.mk_cost - report.mk_cost).abs());
    }
    checks.push(CheckReport {
        name: "reroot_identity".to_string(),
        cases,
        residual: identity_gap,
        tolerance: agreement,
        passed: identity_gap <= agreement,
    });
    checks.push(CheckReport {
        name: "reroot_marginals".to_string(),
        cases,
        residual: marginal_gap,
        tolerance: certify_tol,
        passed: marginal_gap <= certify_tol,
    });
    checks.push(CheckReport {
        name: "reroot_cost_invariance".to_string(),
        cases,
        residual: cost_gap,
        tolerance: agreement,
        passed: cost_gap <= agreement,
    });

    // User-provided multi-marginal instances, certified one by one.
    let mut instances = Vec::new();
    if let Some(dir) = &config.input_path {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|source| IoError::Read {
                path: dir.display().to_string(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let instance = io::load_instance(&path)?;
            let bary = grid_barycenter(instance.marginals(), instance.weights())?;
            let (value, _) = solve_multimarginal(&instance, MultiMarginalCost::Variance)?;
            let certified = certify_barycenter(&instance, &bary)?;
            instances.push(InstanceReport {
                file: path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                certified,
                value_gap: (value - bary.objective).abs(),
            });
        }
    }

    let mut failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    failed.extend(
        instances
            .iter()
            .filter(|i| !i.certified)
            .map(|i| format!("instance {}", i.file)),
    );
    let report = ValidationReport {
        seed: config.seed,
        tolerances: config.tolerances.clone(),
        checks,
        instances,
        passed: failed.is_empty(),
    };
    let report_path = config.output_path.join("report.json");
    io::save_json(&report_path, &report)?;
    if !failed.is_empty() {
        return Err(CliError::Validation { failed });
    }
    Ok(json!({
        "status": "ok",
        "command": "validate",
        "checks": report.checks.len(),
        "instances": report.instances.len(),
        "artifacts": [report_path.display().to_string()],
    }))
}

fn run_plot(config: &RunConfig) -> Result<serde_json::Value, CliError> {
    let svg = match config.plot_source.expect("plot always sets a source") {
        PlotSource::Process => {
            let proc = io::load_process(input(config))?;
            render_process_svg(&proc)
        }
        PlotSource::Measure => {
            let measure = io::load_measure(input(config))?;
            render_measure_svg(&measure)
        }
    };
    let path = config.output_path.join("plot.svg");
    fs::write(&path, svg).map_err(|source| IoError::Write {
        path: path.display().to_string(),
        source,
    })?;
    Ok(json!({
        "status": "ok",
        "command": "plot",
        "artifacts": [path.display().to_string()],
    }))
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 500.0;
const SVG_MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if hi - lo <= 1e-12 {
        0.5 * (out_lo + out_hi)
    } else {
        out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
    }
}

fn svg_header() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n\
         <rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"white\"/>\n"
    )
}

fn svg_axes(out: &mut String, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) {
    let left = SVG_MARGIN;
    let right = SVG_WIDTH - SVG_MARGIN;
    let top = SVG_MARGIN;
    let bottom = SVG_HEIGHT - SVG_MARGIN;
    let _ = writeln!(
        out,
        "<line x1=\"{left}\" y1=\"{bottom}\" x2=\"{right}\" y2=\"{bottom}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>"
    );
    let labels = [
        (left, bottom + 20.0, format!("{x_lo:.3}")),
        (right, bottom + 20.0, format!("{x_hi:.3}")),
        (left - 10.0, bottom, format!("{y_lo:.3}")),
        (left - 10.0, top, format!("{y_hi:.3}")),
    ];
    for (x, y, text) in labels {
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{y:.1}\" font-size=\"12\" text-anchor=\"middle\">{text}</text>"
        );
    }
}

/// Sample paths of a process: one polyline per base atom, first coordinate
/// against grid time.
pub fn render_process_svg(proc: &ProcessRepresentation) -> String {
    let nodes: Vec<f64> = proc.time_maps().iter().map(|(t, _)| *t).collect();
    let t_lo = nodes.iter().copied().fold(f64::INFINITY, f64::min);
    let t_hi = nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut y_lo = f64::INFINITY;
    let mut y_hi = f64::NEG_INFINITY;
    for (_, map) in proc.time_maps() {
        for img in map.images() {
            y_lo = y_lo.min(img[0]);
            y_hi = y_hi.max(img[0]);
        }
    }
    if y_hi - y_lo <= 1e-12 {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let mut out = svg_header();
    svg_axes(&mut out, t_lo, t_hi, y_lo, y_hi);
    let (left, right) = (SVG_MARGIN, SVG_WIDTH - SVG_MARGIN);
    let (top, bottom) = (SVG_MARGIN, SVG_HEIGHT - SVG_MARGIN);
    for atom in 0..proc.base().len() {
        let color = PALETTE[atom % PALETTE.len()];
        let mut points = String::new();
        for (t, map) in proc.time_maps() {
            let x = scale(*t, t_lo, t_hi, left, right);
            let y = scale(map.image(atom)[0], y_lo, y_hi, bottom, top);
            let _ = write!(points, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            points.trim_end()
        );
        for (t, map) in proc.time_maps() {
            let x = scale(*t, t_lo, t_hi, left, right);
            let y = scale(map.image(atom)[0], y_lo, y_hi, bottom, top);
            let _ = writeln!(
                out,
                "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{color}\"/>"
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Histogram bars for a 1d measure, weighted scatter of the first two
/// coordinates otherwise.
pub fn render_measure_svg(measure: &DiscreteMeasure) -> String {
    let merged = measure.merged();
    let (left, right) = (SVG_MARGIN, SVG_WIDTH - SVG_MARGIN);
    let (top, bottom) = (SVG_MARGIN, SVG_HEIGHT - SVG_MARGIN);
    let mut out = svg_header();
    if merged.dim() == 1 {
        let mut order: Vec<usize> = (0..merged.len()).collect();
        order.sort_by(|&a, &b| merged.point(a)[0].total_cmp(&merged.point(b)[0]));
        let x_lo = merged.point(order[0])[0];
        let x_hi = merged.point(*order.last().unwrap())[0];
        let w_hi = merged.weights().iter().copied().fold(0.0f64, f64::max);
        svg_axes(&mut out, x_lo, x_hi, 0.0, w_hi);
        let bar_width = ((right - left) / merged.len() as f64 * 0.6).clamp(2.0, 40.0);
        for &i in &order {
            let cx = scale(merged.point(i)[0], x_lo, x_hi, left, right);
            let h = (merged.weight(i) / w_hi) * (bottom - top);
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{bar_width:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
                cx - bar_width / 2.0,
                bottom - h,
                PALETTE[0]
            );
        }
    } else {
        let mut x_lo = f64::INFINITY;
        let mut x_hi = f64::NEG_INFINITY;
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        for p in merged.points() {
            x_lo = x_lo.min(p[0]);
            x_hi = x_hi.max(p[0]);
            y_lo = y_lo.min(p[1]);
            y_hi = y_hi.max(p[1]);
        }
        if x_hi - x_lo <= 1e-12 {
            x_lo -= 0.5;
            x_hi += 0.5;
        }
        if y_hi - y_lo <= 1e-12 {
            y_lo -= 0.5;
            y_hi += 0.5;
        }
        svg_axes(&mut out, x_lo, x_hi, y_lo, y_hi);
        for (p, &w) in merged.points().iter().zip(merged.weights()) {
            let cx = scale(p[0], x_lo, x_hi, left, right);
            let cy = scale(p[1], y_lo, y_hi, bottom, top);
            let r = 3.0 + 15.0 * w.sqrt();
            let _ = writeln!(
                out,
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"{}\" fill-opacity=\"0.7\"/>",
                PALETTE[1]
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

//! Command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::allocator::{allocate, default_plan, AllocationPlan, Method};
use crate::dist::{fit_delayed_exponential, DistributionSpec};
use crate::error::{Error, Result};
use crate::numeric::{discretize, GridConfig, NumericDistribution};
use crate::simulator::{compare, simulate, Moments, SimResult};
use crate::workflow::{parse_scenario, Objective, Scenario};

#[derive(Debug, Parser)]
#[command(name = "spflow", version, about = "Completion-time analysis and server allocation for series-parallel workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// End-to-end CDF/PDF curves and moments.
    Analyze(AnalyzeArgs),
    /// Bind servers to slots and schedule branch rates.
    Allocate(AllocateArgs),
    /// Monte Carlo replay of a plan.
    Simulate(SimulateArgs),
    /// Proposed, optimal and baseline side by side.
    Compare(CompareArgs),
    /// Fit a delayed exponential to a sample file.
    Fit(FitArgs),
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Grid cells for each discretized distribution.
    #[arg(long)]
    grid_points: Option<usize>,
    /// Quantile at which continuous tails are truncated.
    #[arg(long)]
    quantile: Option<f64>,
}

impl GridArgs {
    fn apply(&self, grid: &mut GridConfig) -> Result<()> {
        if let Some(p) = self.grid_points {
            grid.points = p;
        }
        if let Some(q) = self.quantile {
            grid.horizon_quantile = q;
        }
        grid.ensure_valid()
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Proposed,
    Baseline,
    Optimal,
    All,
}

impl MethodArg {
    fn methods(self) -> Vec<Method> {
        match self {
            MethodArg::Proposed => vec![Method::Proposed],
            MethodArg::Baseline => vec![Method::Baseline],
            MethodArg::Optimal => vec![Method::Optimal],
            MethodArg::All => Method::COMPARED.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Mean,
    Variance,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Mean => Objective::Mean,
            ObjectiveArg::Variance => Objective::Variance,
        }
    }
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    #[command(flatten)]
    grid: GridArgs,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        load_scenario(&self.scenario, self.objective, &self.grid)
    }
}

fn load_scenario(path: &Path, objective: Option<ObjectiveArg>, grid: &GridArgs) -> Result<Scenario> {
    let mut s = parse_scenario(&read(path)?)?;
    if let Some(o) = objective {
        s.objective = o.into();
    }
    grid.apply(&mut s.grid)?;
    if s.name.is_none() {
        s.name = path.file_stem().map(|n| n.to_string_lossy().into_owned());
    }
    Ok(s)
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Scenario JSON file; omit when using an iid generator.
    #[arg(required_unless_present_any = ["serial_iid", "parallel_iid"])]
    scenario: Option<PathBuf>,
    /// n iid copies in series, e.g. `exp:1` or a distribution JSON object.
    #[arg(long, conflicts_with_all = ["scenario", "parallel_iid"])]
    serial_iid: Option<String>,
    /// n iid copies in parallel.
    #[arg(long, conflicts_with = "scenario")]
    parallel_iid: Option<String>,
    /// Copy count `N` or inclusive range `A..B`.
    #[arg(long, default_value = "1")]
    n: String,
    /// Stride through an `--n` range (default 10).
    #[arg(long)]
    step: Option<usize>,
    /// Plan used for a scenario; default is its own binding when complete,
    /// otherwise the proposed allocation.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// CSV of the curves.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Moments JSON destination (default stdout).
    #[arg(long)]
    moments: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "proposed")]
    method: MethodArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Report JSON destination (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Table CSV destination.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// One non-negative number per line.
    samples: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

/// `exp:RATE`, `point:X`, `delayed_exp:RATE[,DELAY[,ALPHA]]`,
/// `delayed_pareto:RATE[,DELAY[,ALPHA]]`, or a distribution JSON object.
pub fn parse_distribution_arg(text: &str) -> Result<DistributionSpec> {
    let text = text.trim();
    let spec = if text.starts_with('{') {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        })?
    } else {
        let (family, params) = text.split_once(':').unwrap_or((text, ""));
        let nums = params
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad parameter '{p}' in '{text}': {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let arity = |lo: usize, hi: usize| {
            if nums.len() < lo || nums.len() > hi {
                Err(Error::InvalidArgument(format!("'{family}' takes {lo} to {hi} parameters")))
            } else {
                Ok(())
            }
        };
        let opt = |i: usize, default: f64| nums.get(i).copied().unwrap_or(default);
        match family {
            "exp" | "exponential" => {
                arity(1, 1)?;
                DistributionSpec::exponential(nums[0])
            }
            "point" | "point_mass" => {
                arity(1, 1)?;
                DistributionSpec::point_mass(nums[0])
            }
            "delayed_exp" => {
                arity(1, 3)?;
                DistributionSpec::delayed_exp(nums[0], opt(1, 0.0), opt(2, 1.0))
            }
            "delayed_pareto" => {
                arity(1, 3)?;
                DistributionSpec::delayed_pareto(nums[0], opt(1, 0.0), opt(2, 1.0))
            }
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown distribution '{family}' (exp, point, delayed_exp, delayed_pareto or JSON)"
                )))
            }
        }
    };
    spec.ensure_valid()?;
    Ok(spec)
}

/// `N` or inclusive `A..B` walked with `step`.
pub fn parse_counts(text: &str, step: Option<usize>) -> Result<Vec<usize>> {
    let bad = || Error::InvalidArgument(format!("--n expects N or A..B, got '{text}'"));
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let (lo, hi, default_step) = match text.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?, 10),
        None => {
            let n = parse(text)?;
            (n, n, 1)
        }
    };
    let step = step.unwrap_or(default_step);
    if lo == 0 || hi < lo || step == 0 {
        return Err(bad());
    }
    Ok((lo..=hi).step_by(step).collect())
}

#[derive(Serialize)]
struct IidRow {
    n: usize,
    mean: f64,
    variance: f64,
}

#[derive(Serialize)]
struct IidMoments {
    composition: &'static str,
    dist: DistributionSpec,
    rows: Vec<IidRow>,
}

#[derive(Serialize)]
struct ScenarioMoments<'a> {
    scenario: &'a str,
    mean: f64,
    variance: f64,
    plan: &'a AllocationPlan,
}

fn analyze(args: &AnalyzeArgs) -> Result<()> {
    if let Some(path) = &args.scenario {
        let scenario = load_scenario(path, args.objective, &args.grid)?;
        let plan = match args.method {
            None => default_plan(&scenario)?,
            Some(MethodArg::All) => {
                return Err(Error::InvalidArgument("analyze takes a single --method".into()))
            }
            Some(m) => allocate(&scenario, m.methods()[0])?,
        };
        let d = plan.distribution(&scenario)?;
        if let Some(out) = &args.out {
            std::fs::write(out, d.to_csv())?;
        }
        let (mean, variance) = d.moments();
        let moments = ScenarioMoments {
            scenario: scenario.name.as_deref().unwrap_or("scenario"),
            mean,
            variance,
            plan: &plan,
        };
        return emit(args.moments.as_deref(), &to_json(&moments));
    }

    let (serial, text) = match (&args.serial_iid, &args.parallel_iid) {
        (Some(t), None) => (true, t),
        (None, Some(t)) => (false, t),
        _ => unreachable!("clap enforces exactly one source"),
    };
    let spec = parse_distribution_arg(text)?;
    let mut grid = GridConfig::default();
    args.grid.apply(&mut grid)?;
    let counts = parse_counts(&args.n, args.step)?;
    let base = discretize(&spec, &grid)?;
    let mut current: Option<NumericDistribution> = None;
    let mut csv = String::from("n,t,pdf,cdf,atom_mass\n");
    let mut rows = Vec::new();
    for k in 1..=*counts.last().unwrap() {
        let next = match current.take() {
            None => base.clone(),
            Some(c) if serial => c.convolve(&base),
            Some(c) => c.max_compose(&base),
        };
        if counts.contains(&k) {
            next.write_csv_rows(&mut csv, Some(&k.to_string()));
            let (mean, variance) = next.moments();
            rows.push(IidRow { n: k, mean, variance });
        }
        current = Some(next);
    }
    if let Some(out) = &args.out {
        std::fs::write(out, &csv)?;
    }
    let moments = IidMoments {
        composition: if serial { "serial" } else { "parallel" },
        dist: spec,
        rows,
    };
    emit(args.moments.as_deref(), &to_json(&moments))
}

fn allocate_cmd(args: &AllocateArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let text = match args.method {
        MethodArg::All => {
            let plans = Method::COMPARED
                .iter()
                .map(|m| allocate(&scenario, *m))
                .collect::<Result<Vec<_>>>()?;
            to_json(&plans)
        }
        m => to_json(&allocate(&scenario, m.methods()[0])?),
    };
    emit(args.out.as_deref(), &text)
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    method: Method,
    #[serde(flatten)]
    result: &'a SimResult,
    analytic: Moments,
    plan: &'a AllocationPlan,
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let plan = match args.method {
        None => default_plan(&scenario)?,
        Some(MethodArg::All) => return Err(Error::InvalidArgument("simulate takes a single --method".into())),
        Some(m) => allocate(&scenario, m.methods()[0])?,
    };
    let analytic = plan.distribution(&scenario)?;
    let result = simulate(&scenario, &plan, args.trials, args.seed)?.with_ks(&analytic);
    let out = SimulateOutput {
        method: plan.method,
        result: &result,
        analytic: Moments {
            mean: plan.mean,
            var: plan.variance,
        },
        plan: &plan,
    };
    emit(args.out.as_deref(), &to_json(&out))
}

fn compare_cmd(args: &CompareArgs) -> Result<()> {
    let scenario = args.scenario.load()?;
    let report = compare(&scenario, args.trials, args.seed)?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, report.to_csv())?;
    }
    emit(args.out.as_deref(), &to_json(&report))
}

/// Parses a sample file: one non-negative number per line, blank lines
/// ignored.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let path = format!("line {}", i + 1);
        let x: f64 = line.parse().map_err(|e| Error::Parse {
            path: path.clone(),
            message: format!("'{line}': {e}"),
        })?;
        if !(x.is_finite() && x >= 0.0) {
            return Err(Error::invalid(path, format!("sample {x} must be finite and >= 0")));
        }
        out.push(x);
    }
    Ok(out)
}

fn fit_cmd(args: &FitArgs) -> Result<()> {
    let samples = parse_samples(&read(&args.samples)?)?;
    let spec = fit_delayed_exponential(&samples)?;
    emit(args.out.as_deref(), &to_json(&spec))
}

/// Runs one command; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Allocate(a) => allocate_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Fit(a) => fit_cmd(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let mut msg = String::from("error: ");
            match &e {
                Error::Invalid(violations) if violations.len() > 1 => {
                    msg.push_str("invalid input");
                    for v in violations {
                        let _ = write!(msg, "\n  {v}");
                    }
                }
                _ => {
                    let _ = write!(msg, "{e}");
                }
            }
            eprintln!("{msg}");
            e.exit_code()
        }
    }
}

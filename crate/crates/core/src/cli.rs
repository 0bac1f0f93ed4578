//! Command-line front end for `qubo-grid`.
//!
//! Exit codes: 0 converged, 1 input or configuration error, 2 no
//! convergence, 3 backend unavailable.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;

use crate::anneal::{
    solve_exhaustive, solve_sa, AnnealError, ExactSolver, RemoteSolver, SaConfig, Sample, SimulatedAnnealing, Solver,
};
use crate::apps::{
    build_identification, build_powerflow, nr_powerflow, AdmittanceUnknowns, AppError, Comparison, NrSolution,
    Pattern, VoltageUnknowns, NR_MAX_ITER, NR_TOL,
};
use crate::discretize::{StepConfig, StepController, StepMode};
use crate::iterate::{run, ConvergenceCriteria, IterateError, IterationTrace, ResidualModel, ResidualSystem, Solution};
use crate::pbp::{QuboProblem, VarRegistry, DEFAULT_PENALTY_SCALE};
use crate::powernet::{
    bundled_case, default_scenarios, load_case, load_measurements, save_measurements, synthesize_measurements,
    MeasurementSet, Network,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REMOTE_URL_ENV: &str = "QUBO_GRID_REMOTE_URL";

#[derive(Parser, Debug)]
#[command(name = "qubo-grid", version, about = "Power-system equations as iterated QUBO problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the bus admittance matrix from voltage/current snapshots
    Identify(IdentifyArgs),
    /// Solve for the complex bus voltages of a network
    Powerflow(PowerflowArgs),
    /// Minimize a QUBO given in the text format
    SolveQubo(SolveQuboArgs),
    /// Write noise-free or noisy synthetic measurements for a case
    Synthesize(SynthesizeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exhaustive,
    Sa,
    Remote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternArg {
    Full,
    Symmetric,
    /// Diagonal plus branch endpoints of the case; the rest known zero
    Topology,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BackendOpts {
    #[arg(long, value_enum, default_value_t = Backend::Exhaustive)]
    pub backend: Backend,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SA sweeps per restart
    #[arg(long, default_value_t = 2000)]
    pub sweeps: usize,
    /// SA restarts
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveOpts {
    #[command(flatten)]
    #[serde(flatten)]
    pub backend: BackendOpts,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 5)]
    pub stall_iters: usize,
    /// Initial step for every unknown (default depends on the application)
    #[arg(long)]
    pub step_init: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub step_min: f64,
    #[arg(long, default_value_t = 0.5)]
    pub shrink: f64,
    /// Step growth after three equal moves; 1 disables it
    #[arg(long, default_value_t = 1.0)]
    pub grow: f64,
    /// Snap steps onto the 1-2-5 series
    #[arg(long)]
    pub series125: bool,
    #[arg(long, default_value_t = DEFAULT_PENALTY_SCALE)]
    pub penalty_scale: f64,
    /// Solution JSON (printed to stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Iteration trace JSON; a CSV with the same stem is written next to it
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Values to compare against: a solution JSON or a flat name → value object
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct IdentifyArgs {
    /// Case file, or the name of a bundled case
    #[arg(long)]
    pub case: Option<String>,
    /// Measurement set JSON; synthesized from `--case` when absent
    #[arg(long)]
    pub measurements: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PatternArg::Full)]
    pub pattern: PatternArg,
    /// Scenarios to synthesize when no measurements are given (default N+1)
    #[arg(long)]
    pub scenarios: Option<usize>,
    /// Current noise standard deviation for synthesized measurements
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveOpts,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PowerflowArgs {
    #[arg(long)]
    pub case: String,
    /// Compare against the Newton-Raphson solution
    #[arg(long)]
    pub compare_nr: bool,
    /// Restart Newton-Raphson from the annealed voltages and report iterations
    #[arg(long)]
    pub warm_start_nr: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub solve: SolveOpts,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SolveQuboArgs {
    pub file: PathBuf,
    /// Full enumeration regardless of backend
    #[arg(long)]
    pub exact: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub backend: BackendOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SynthesizeArgs {
    #[arg(long)]
    pub case: String,
    /// Number of scenarios (default N+1)
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    command: &'static str,
    #[serde(flatten)]
    args: &'a T,
    #[serde(skip_serializing_if = "Option::is_none")]
    remote_url: Option<String>,
}

#[derive(Serialize)]
struct ComparisonDoc<'a> {
    reference: String,
    max_rel_error: f64,
    rows: &'a [crate::apps::ComparisonRow],
}

#[derive(Serialize)]
struct NrReport<'a> {
    cold_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    warm_iterations: Option<usize>,
    solution: &'a NrSolution,
}

#[derive(Serialize)]
struct SolutionDoc<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig<'a, T>,
    converged: bool,
    stop_reason: crate::iterate::StopReason,
    iterations: usize,
    final_energy: f64,
    residual_norm_sq: f64,
    values: &'a IndexMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<ComparisonDoc<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    newton_raphson: Option<NrReport<'a>>,
}

#[derive(Serialize)]
struct TraceDoc<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig<'a, T>,
    #[serde(flatten)]
    trace: &'a IterationTrace,
}

#[derive(Serialize)]
struct QuboDoc<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig<'a, T>,
    n: usize,
    energy: f64,
    assignment: &'a [u8],
}

/// Whether the run reached its stopping criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(Status::Converged) => 0,
        Ok(Status::NotConverged) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        let anneal = cause
            .downcast_ref::<AnnealError>()
            .or_else(|| match cause.downcast_ref::<IterateError>() {
                Some(IterateError::Backend(a)) => Some(a),
                _ => None,
            });
        if let Some(AnnealError::Unavailable(_) | AnnealError::Protocol(_)) = anneal {
            return 3;
        }
        if let Some(AppError::NotConverged { .. } | AppError::SingularJacobian(_)) = cause.downcast_ref::<AppError>() {
            return 2;
        }
    }
    1
}

pub fn execute(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Identify(a) => cmd_identify(a),
        Command::Powerflow(a) => cmd_powerflow(a),
        Command::SolveQubo(a) => cmd_solve_qubo(a),
        Command::Synthesize(a) => cmd_synthesize(a),
    }
}

/// A case file, falling back to the bundled case of that name.
fn load_network(arg: &str) -> Result<Network> {
    let path = Path::new(arg);
    if !path.exists() {
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or(arg);
        if let Some(net) = bundled_case(name) {
            return Ok(net);
        }
    }
    Ok(load_case(path)?)
}

fn remote_url(b: &BackendOpts) -> Option<String> {
    (b.backend == Backend::Remote).then(|| std::env::var(REMOTE_URL_ENV).ok()).flatten()
}

fn make_backend(b: &BackendOpts) -> Result<Box<dyn Solver>> {
    Ok(match b.backend {
        Backend::Exhaustive => Box::new(ExactSolver),
        Backend::Sa => Box::new(SimulatedAnnealing { config: sa_config(b)? }),
        Backend::Remote => {
            let url = remote_url(b).with_context(|| format!("--backend remote needs {REMOTE_URL_ENV}"))?;
            Box::new(RemoteSolver::new(url))
        }
    })
}

fn sa_config(b: &BackendOpts) -> Result<SaConfig> {
    if b.sweeps == 0 || b.restarts == 0 {
        bail!("--sweeps and --restarts must be at least 1");
    }
    Ok(SaConfig { sweeps: b.sweeps, restarts: b.restarts, seed: b.seed, ..SaConfig::default() })
}

fn check_solve_opts(o: &SolveOpts) -> Result<()> {
    let positive = [("--epsilon", o.epsilon), ("--step-min", o.step_min), ("--penalty-scale", o.penalty_scale)];
    for (flag, v) in positive.into_iter().chain(o.step_init.map(|s| ("--step-init", s))) {
        if !(v > 0.0 && v.is_finite()) {
            bail!("{flag} must be positive and finite, got {v}");
        }
    }
    if !(o.shrink > 0.0 && o.shrink < 1.0) {
        bail!("--shrink must lie in (0, 1), got {}", o.shrink);
    }
    if !(o.grow >= 1.0 && o.grow.is_finite()) {
        bail!("--grow must be at least 1, got {}", o.grow);
    }
    if o.max_iters == 0 {
        bail!("--max-iters must be at least 1");
    }
    Ok(())
}

fn controller(o: &SolveOpts) -> StepController {
    let mode = if o.series125 { StepMode::Series125 } else { StepMode::Geometric };
    StepController::new(StepConfig { shrink: o.shrink, grow: o.grow, step_min: o.step_min, mode })
}

fn criteria(o: &SolveOpts) -> ConvergenceCriteria {
    ConvergenceCriteria { epsilon: o.epsilon, max_iters: o.max_iters, stall_iters: o.stall_iters }
}

fn solve_system<M: ResidualModel>(sys: ResidualSystem<M>, o: &SolveOpts) -> Result<Solution> {
    let backend = make_backend(&o.backend)?;
    let sys = sys.with_penalty_scale(o.penalty_scale);
    Ok(run(&sys, backend.as_ref(), &criteria(o), &mut controller(o))?)
}

/// Name → value pairs from a solution JSON's `values` or a flat object.
fn load_reference(path: &Path) -> Result<IndexMap<String, f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading reference {}", path.display()))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing reference {}", path.display()))?;
    let obj = doc.get("values").unwrap_or(&doc);
    let Some(map) = obj.as_object() else { bail!("reference {} is not a JSON object", path.display()) };
    map.iter()
        .map(|(k, v)| {
            v.as_f64()
                .map(|x| (k.clone(), x))
                .with_context(|| format!("reference {}: {k} is not a number", path.display()))
        })
        .collect()
}

fn compare_with(values: &IndexMap<String, f64>, reference: &IndexMap<String, f64>) -> Comparison {
    Comparison::new(values.iter().filter_map(|(k, &v)| reference.get(k).map(|&r| (k.as_str(), v, r))))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("output serializes");
    s.push('\n');
    s
}

fn sibling(path: &Path, ext: &str) -> Result<PathBuf> {
    let p = path.with_extension(ext);
    if p == path {
        bail!("{} would be overwritten by its own {ext} companion; use a .json name", path.display());
    }
    Ok(p)
}

fn emit<T: Serialize>(
    cfg: &RunConfig<'_, T>,
    o: &SolveOpts,
    sol: &Solution,
    comparison: Option<(String, Comparison)>,
    nr: Option<NrReport<'_>>,
) -> Result<Status> {
    let doc = SolutionDoc {
        version: VERSION,
        config: cfg,
        converged: sol.converged,
        stop_reason: sol.stop_reason,
        iterations: sol.iterations,
        final_energy: sol.final_energy,
        residual_norm_sq: sol.residual_norm_sq,
        values: &sol.values,
        comparison: comparison
            .as_ref()
            .map(|(r, c)| ComparisonDoc { reference: r.clone(), max_rel_error: c.max_rel_error(), rows: &c.rows }),
        newton_raphson: nr,
    };
    let json = to_json(&doc);
    match &o.out {
        Some(path) => {
            write_file(path, &json)?;
            if let Some((_, c)) = &comparison {
                write_file(&sibling(path, "errors.csv")?, &c.to_csv())?;
            }
        }
        None => print!("{json}"),
    }
    if let Some(path) = &o.trace {
        let csv_path = sibling(path, "csv")?;
        write_file(path, &to_json(&TraceDoc { version: VERSION, config: cfg, trace: &sol.trace }))?;
        write_file(&csv_path, &sol.trace.to_csv())?;
    }
    eprintln!(
        "{} after {} iteration(s), energy {:e}{}",
        if sol.converged { "converged" } else { "did not converge" },
        sol.iterations,
        sol.final_energy,
        comparison.map(|(r, c)| format!(", max relative error vs {r} {:e}", c.max_rel_error())).unwrap_or_default()
    );
    Ok(if sol.converged { Status::Converged } else { Status::NotConverged })
}

fn cmd_identify(a: &IdentifyArgs) -> Result<Status> {
    check_solve_opts(&a.solve)?;
    let net = a.case.as_deref().map(load_network).transpose()?;
    let meas: MeasurementSet = match (&a.measurements, &net) {
        (Some(path), _) => load_measurements(path)?,
        (None, Some(net)) => {
            let count = a.scenarios.unwrap_or(net.n() + 1);
            let v = default_scenarios(net.n(), count, a.solve.backend.seed);
            synthesize_measurements(net, &v, a.noise, a.solve.backend.seed)?
        }
        (None, None) => bail!("identify needs --measurements or --case"),
    };
    let n = meas.n().context("measurement set is empty")?;
    if let Some(net) = &net {
        if net.n() != n {
            bail!("case has {} buses but measurements cover {n}", net.n());
        }
    }
    let pattern = match a.pattern {
        PatternArg::Full => Pattern::Full,
        PatternArg::Symmetric => Pattern::Symmetric,
        PatternArg::Topology => {
            let net = net.as_ref().context("--pattern topology needs --case")?;
            let mut mask: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
            for br in &net.branches {
                mask.extend([(br.from, br.to), (br.to, br.from)]);
            }
            Pattern::Masked(mask)
        }
    };
    let cfg = RunConfig { command: "identify", args: a, remote_url: remote_url(&a.solve.backend) };

    let unknowns = AdmittanceUnknowns::new(n, pattern, None, a.solve.step_init, &mut VarRegistry::new())?;
    let sys = build_identification(&meas, &unknowns)?;
    let sol = solve_system(sys, &a.solve)?;

    let comparison = match (&a.solve.reference, &net) {
        (Some(path), _) => Some((path.display().to_string(), compare_with(&sol.values, &load_reference(path)?))),
        (None, Some(net)) => {
            let y = net.ybus();
            let truth: IndexMap<String, f64> = unknowns
                .entries
                .iter()
                .flat_map(|e| [(e.g_var.name.clone(), y.g[(e.i, e.k)]), (e.b_var.name.clone(), y.b[(e.i, e.k)])])
                .collect();
            Some(("case admittance".to_string(), compare_with(&sol.values, &truth)))
        }
        (None, None) => None,
    };
    emit(&cfg, &a.solve, &sol, comparison, None)
}

fn cmd_powerflow(a: &PowerflowArgs) -> Result<Status> {
    check_solve_opts(&a.solve)?;
    let net = load_network(&a.case)?;
    let cfg = RunConfig { command: "powerflow", args: a, remote_url: remote_url(&a.solve.backend) };
    let unknowns = VoltageUnknowns::new(&net, None, a.solve.step_init, &mut VarRegistry::new())?;
    let sol = solve_system(build_powerflow(&net, &unknowns), &a.solve)?;
    let values: Vec<f64> = sol.values.values().copied().collect();
    let voltages = unknowns.voltages(&values);

    let cold = if a.compare_nr || a.warm_start_nr {
        Some(nr_powerflow(&net, NR_TOL, NR_MAX_ITER, None).context("cold-start Newton-Raphson")?)
    } else {
        None
    };
    let warm = if a.warm_start_nr {
        Some(nr_powerflow(&net, NR_TOL, NR_MAX_ITER, Some(&voltages)).context("warm-start Newton-Raphson")?)
    } else {
        None
    };
    let comparison = match (&a.solve.reference, &cold) {
        (Some(path), _) => Some((path.display().to_string(), compare_with(&sol.values, &load_reference(path)?))),
        (None, Some(nr)) if a.compare_nr => {
            let reference: IndexMap<String, f64> = unknowns
                .buses
                .iter()
                .flat_map(|&i| [(format!("mu[{i}]"), nr.voltages[i].re), (format!("omega[{i}]"), nr.voltages[i].im)])
                .collect();
            Some(("newton-raphson".to_string(), compare_with(&sol.values, &reference)))
        }
        _ => None,
    };
    if let (Some(c), Some(w)) = (&cold, &warm) {
        eprintln!("newton-raphson iterations: cold {} warm {}", c.iterations, w.iterations);
    }
    let nr = cold.as_ref().map(|c| NrReport {
        cold_iterations: c.iterations,
        warm_iterations: warm.as_ref().map(|w| w.iterations),
        solution: c,
    });
    emit(&cfg, &a.solve, &sol, comparison, nr)
}

fn cmd_solve_qubo(a: &SolveQuboArgs) -> Result<Status> {
    let text = fs::read_to_string(&a.file).with_context(|| format!("reading {}", a.file.display()))?;
    let q = QuboProblem::from_text(&text).with_context(|| format!("parsing {}", a.file.display()))?;
    let sample: Sample = if a.exact || a.backend.backend == Backend::Exhaustive {
        solve_exhaustive(&q)?
    } else if a.backend.backend == Backend::Sa {
        solve_sa(&q, &sa_config(&a.backend)?)?
    } else {
        make_backend(&a.backend)?.solve(&q, &[])?
    };
    let bits: String = sample.assignment().iter().map(|b| char::from(b'0' + b)).collect();
    println!("energy {}", sample.energy());
    println!("assignment {bits}");
    if let Some(path) = &a.out {
        let cfg = RunConfig { command: "solve-qubo", args: a, remote_url: remote_url(&a.backend) };
        let doc =
            QuboDoc { version: VERSION, config: &cfg, n: q.n(), energy: sample.energy(), assignment: sample.assignment() };
        write_file(path, &to_json(&doc))?;
    }
    Ok(Status::Converged)
}

fn cmd_synthesize(a: &SynthesizeArgs) -> Result<Status> {
    let net = load_network(&a.case)?;
    let count = a.scenarios.unwrap_or(net.n() + 1);
    let meas = synthesize_measurements(&net, &default_scenarios(net.n(), count, a.seed), a.noise, a.seed)?;
    let text = save_measurements(&meas);
    match &a.out {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    Ok(Status::Converged)
}

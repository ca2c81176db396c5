//! `dmpc`: offline synthesis, single solves, closed-loop runs, soundness
//! checks and feasibility sweeps for a scenario file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dmpc_core::admm::AdmmOptions;
use dmpc_core::offline::Synthesis;
use dmpc_core::sim::{self, SimOptions, StepSolve};
use dmpc_core::verify::{verify_terminal_sets, DEFAULT_TOLERANCE};
use dmpc_core::{synthesize, OfflineOptions, Scenario, Scheme, SolveMode, SolveStatus, TerminalIngredients};
use nalgebra::DVector;

/// Exit code for an offline problem without solution.
const EXIT_SYNTH_INFEASIBLE: u8 = 2;
/// Exit code for a numerical failure of an online solve.
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "dmpc", version, about = "Distributed MPC with adaptive ellipsoidal terminal sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize terminal costs and gains and write them as JSON.
    Synth(SynthArgs),
    /// Solve the online problem once.
    Solve(RunArgs),
    /// Run the closed loop and write a CSV trace.
    Simulate(SimulateArgs),
    /// Sample the terminal set implications of one solution.
    Verify(VerifyArgs),
    /// Solve the first online problem over a grid of initial states.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Precomputed ingredients file; synthesized on the fly when absent.
    #[arg(long)]
    ingredients: Option<PathBuf>,
    /// Prediction horizon; overrides the scenario.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    #[arg(long, default_value = "ingredients.json")]
    out: PathBuf,
    /// Overwrite an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// adap, asym or rlxd; overrides the scenario (default asym).
    #[arg(long)]
    scheme: Option<Scheme>,
    /// central or admm; overrides the scenario (default central).
    #[arg(long)]
    mode: Option<SolveMode>,
    /// Comma-separated initial state; overrides the scenario.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Force zero centers for the asymmetric schemes.
    #[arg(long)]
    pin_center: bool,
    /// Output file; JSON for solve, CSV for simulate.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Newline-delimited JSON of the ADMM messages.
    #[arg(long)]
    trace_admm: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Closed-loop steps; overrides the scenario (default 30).
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Samples per subsystem.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale every certified `a` before sampling.
    #[arg(long, default_value_t = 1.0)]
    inflate: f64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tol: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Comma-separated schemes (default all).
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<Scheme>,
    #[arg(long, default_value = "central")]
    mode: SolveMode,
    /// Lower grid bound in every coordinate.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    /// Upper grid bound in every coordinate.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 11)]
    points: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A command outcome that still exits nonzero.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<Exit>() {
                Some(Exit(code, _)) => *code,
                None => match e.downcast_ref::<dmpc_core::Error>() {
                    Some(dmpc_core::Error::SynthesisInfeasible) => EXIT_SYNTH_INFEASIBLE,
                    Some(dmpc_core::Error::NumericalFailure(_)) => EXIT_NUMERICAL,
                    _ => 1,
                },
            };
            ExitCode::from(code)
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("reading scenario {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_synthesis(s: &Synthesis) {
    for (i, p) in s.ingredients.p.iter().enumerate() {
        println!("P_{} = {:?}, K_{} = {:?}", i + 1, p.as_slice(), i + 1, s.ingredients.k[i].as_slice());
    }
    println!(
        "lyapunov check: {} (max eigenvalue {:.3e}, spectral radius {:.4})",
        if s.report.passed { "passed" } else { "FAILED" },
        s.report.max_eigenvalue,
        s.report.spectral_radius
    );
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    if args.out.exists() && !args.force {
        bail!("{} exists; pass --force to overwrite", args.out.display());
    }
    let scenario = load_scenario(&args.scenario)?;
    let s = synthesize(&scenario.system, &OfflineOptions::default())?;
    print_synthesis(&s);
    write_json(&args.out, &s.ingredients.to_json())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Resolved inputs shared by the online commands.
struct Setup {
    scenario: Scenario,
    ingredients: TerminalIngredients,
    horizon: usize,
    scheme: Scheme,
    mode: SolveMode,
    x0: DVector<f64>,
    options: SimOptions,
}

fn parse_x0(text: &str) -> Result<DVector<f64>> {
    let values = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("invalid x0 entry {s:?}: {e}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(values))
}

fn load_ingredients(common: &ScenarioArgs, scenario: &Scenario) -> Result<TerminalIngredients> {
    match &common.ingredients {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let ing = TerminalIngredients::from_json(&serde_json::from_str(&text)?)?;
            ing.validate(&scenario.system)?;
            Ok(ing)
        }
        None => Ok(synthesize(&scenario.system, &OfflineOptions::default())?.ingredients),
    }
}

fn setup(args: &RunArgs) -> Result<Setup> {
    let scenario = load_scenario(&args.common.scenario)?;
    let ingredients = load_ingredients(&args.common, &scenario)?;
    let x0 = match &args.x0 {
        Some(text) => parse_x0(text)?,
        None => scenario.x0.clone().ok_or_else(|| anyhow!("no x0 in the scenario; pass --x0"))?,
    };
    let n = scenario.system.maps.global_state_dim();
    if x0.len() != n {
        bail!("x0 has {} entries, the system has {n} states", x0.len());
    }
    let mut options = SimOptions::default();
    options.ocp.pin_center = args.pin_center;
    options.admm = AdmmOptions {
        pin_center: args.pin_center,
        record_messages: args.trace_admm.is_some(),
        ..AdmmOptions::default()
    };
    Ok(Setup {
        horizon: args.common.horizon.unwrap_or(scenario.horizon),
        scheme: args.scheme.or(scenario.scheme).unwrap_or(Scheme::Asym),
        mode: args.mode.or(scenario.mode).unwrap_or(SolveMode::Central),
        x0,
        options,
        ingredients,
        scenario,
    })
}

fn solve_once(s: &Setup) -> Result<StepSolve> {
    Ok(sim::solve_step(
        s.scheme,
        &s.x0,
        s.horizon,
        &s.ingredients,
        &s.scenario.system,
        s.mode,
        &s.options,
    )?)
}

fn summary_line(s: &Setup, step: &StepSolve) -> String {
    let mut line = format!("{} ({}, T = {}): {}", s.scheme, s.mode, s.horizon, step.status);
    if let Some(sol) = &step.solution {
        line += &format!(", J = {:.6}", sol.objective);
    }
    if let Some(it) = step.admm_iterations {
        line += &format!(", {it} ADMM iterations");
    }
    if let Some(note) = &step.note {
        line += &format!(" ({note})");
    }
    line
}

fn numerical_exit(status: SolveStatus, what: &str) -> Result<()> {
    match status {
        SolveStatus::NumericalFailure | SolveStatus::Unbounded => {
            Err(Exit(EXIT_NUMERICAL, format!("{what} ended with status {status}")).into())
        }
        _ => Ok(()),
    }
}

fn cmd_solve(args: &RunArgs) -> Result<()> {
    let s = setup(args)?;
    let step = solve_once(&s)?;
    println!("{}", summary_line(&s, &step));
    if let Some(path) = &args.out {
        let mut value = match &step.solution {
            Some(sol) => sol.to_json(&s.ingredients),
            None => serde_json::json!({
                "status": step.status.to_string(),
                "scheme": s.scheme.tag(),
                "horizon": s.horizon,
                "J": null,
            }),
        };
        value["mode"] = serde_json::json!(s.mode.to_string());
        value["x0"] = serde_json::json!(s.x0.as_slice());
        if let Some(it) = step.admm_iterations {
            value["admm_iterations"] = serde_json::json!(it);
        }
        write_json(path, &value)?;
    }
    if let Some(path) = &args.trace_admm {
        let mut out = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        for msg in &step.messages {
            writeln!(out, "{}", serde_json::to_string(msg)?)?;
        }
    }
    numerical_exit(step.status, "the online problem")
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let s = setup(&args.run)?;
    let steps = args.steps.or(s.scenario.steps).unwrap_or(30);
    let trace = sim::run(
        s.scheme,
        &s.x0,
        s.horizon,
        steps,
        &s.ingredients,
        &s.scenario.system,
        s.mode,
        &s.options,
    )?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv, &s.scenario.system)?;
    let summary = format!(
        "{} ({}, T = {}): {} of {} steps optimal, closed-loop cost {:.6}, |x| = {:.3e}{}",
        s.scheme,
        s.mode,
        s.horizon,
        trace.records.iter().filter(|r| r.status == SolveStatus::Optimal).count(),
        steps,
        trace.closed_loop_cost(&s.scenario.system),
        trace.final_state.norm(),
        trace.truncated.as_ref().map(|r| format!(", stopped: {r}")).unwrap_or_default()
    );
    match &args.run.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{summary}");
        }
        None => {
            std::io::stdout().write_all(&csv)?;
            eprintln!("{summary}");
        }
    }
    if let Some(path) = &args.run.trace_admm {
        let mut out = fs::File::create(path).with_context(|| format!("writing {}", path.display()))?;
        trace.write_message_trace(&mut out)?;
    }
    match trace.records.last() {
        Some(r) => numerical_exit(r.status, &format!("step {}", r.t)),
        None => Ok(()),
    }
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    if args.inflate.is_nan() || args.inflate < 0.0 {
        bail!("--inflate must be nonnegative");
    }
    let s = setup(&args.run)?;
    let step = solve_once(&s)?;
    println!("{}", summary_line(&s, &step));
    let Some(sol) = &step.solution else {
        println!("no terminal sets to verify");
        return numerical_exit(step.status, "the online problem");
    };
    let mut sets = sol.sets.clone();
    for set in &mut sets {
        set.a *= args.inflate;
    }
    let report = verify_terminal_sets(&sets, &s.ingredients, &s.scenario.system, args.samples, args.seed, args.tol)?;
    println!(
        "{} samples per subsystem: invariance {}, state rows {}, input rows {} violations (worst excess {:.3e})",
        report.samples,
        report.invariance.count,
        report.state_rows.count,
        report.input_rows.count,
        report.invariance.worst.max(report.state_rows.worst).max(report.input_rows.worst)
    );
    if let Some(path) = &args.run.out {
        let mut value = serde_json::to_value(&report)?;
        value["scheme"] = serde_json::json!(s.scheme.tag());
        value["inflate"] = serde_json::json!(args.inflate);
        value["seed"] = serde_json::json!(args.seed);
        value["total_violations"] = serde_json::json!(report.total_violations());
        write_json(path, &value)?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let scenario = load_scenario(&args.common.scenario)?;
    if scenario.system.maps.global_state_dim() != 2 {
        bail!("sweep grids are two-dimensional; the system has {} states", scenario.system.maps.global_state_dim());
    }
    if args.points == 0 || args.lo.partial_cmp(&args.hi) != Some(std::cmp::Ordering::Less) {
        bail!("need --points >= 1 and --lo < --hi");
    }
    let ingredients = load_ingredients(&args.common, &scenario)?;
    let schemes = if args.schemes.is_empty() { Scheme::ALL.to_vec() } else { args.schemes.clone() };
    let grid = sim::square_grid(args.lo, args.hi, args.points);
    let points = sim::feasibility_sweep(
        &schemes,
        &grid,
        args.common.horizon.unwrap_or(scenario.horizon),
        &ingredients,
        &scenario.system,
        args.mode,
        &SimOptions::default(),
        args.jobs,
    )?;
    let mut csv = Vec::new();
    sim::write_sweep_csv(&points, &mut csv)?;
    let summary: Vec<String> = sim::summarize(&points)
        .iter()
        .map(|s| format!("{}: {} of {} feasible, {} numerical failures", s.scheme, s.feasible, s.points, s.numerical_failures))
        .collect();
    match &args.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", summary.join("\n"));
        }
        None => {
            std::io::stdout().write_all(&csv)?;
            eprintln!("{}", summary.join("\n"));
        }
    }
    Ok(())
}

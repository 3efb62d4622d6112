//! Command-line front end: validate problem configs, run the decentralized
//! solver or the centralized baseline, and emit CSV/JSON artifacts.

mod artifacts;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use declq::{centralized_lqr, compare, solve, validate_problem, FeedbackMode};

use artifacts::ArtifactWriter;
use config::{parse_config, Problem, ProblemConfig};

/// Error categories mapped onto exit codes: validation -> 1, numerical -> 2,
/// I/O -> 3.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (category, msg) = match self {
            CliError::Validation(m) => ("validation", m),
            CliError::Numerical(m) => ("numerical", m),
            CliError::Io(m) => ("io", m),
        };
        // single machine-parseable line
        write!(f, "error: {category}: {}", msg.replace('\n', "; "))
    }
}

impl From<declq::Error> for CliError {
    fn from(err: declq::Error) -> Self {
        match err {
            declq::Error::Dimension(m) | declq::Error::Validation(m) => CliError::Validation(m),
            declq::Error::Numerical(m) => CliError::Numerical(m),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "declq",
    version,
    about = "Decentralized LQ gain synthesis for discrete-time linear systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a problem configuration and print the validation report.
    Validate(CommonArgs),
    /// Compute the decentralized gain schedule and write gains.csv,
    /// residuals.csv, states.csv, and report.json.
    Solve(CommonArgs),
    /// Compute the centralized finite-horizon LQR schedule and write its
    /// artifacts in the same formats.
    Baseline(CommonArgs),
    /// Run both solvers and write comparison.json with the cost gap and
    /// per-step gain distances.
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Problem configuration file (JSON).
    config: PathBuf,
    /// Override outputs.directory from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Feedback mode; defaults to `output` when the config declares
    /// output_maps and `state` otherwise.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Suppress stdout summaries.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    State,
    Output,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: validation: {line}");
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Validate(args) => run_validate(&args),
        Command::Solve(args) => run_solve(&args).map(|_| ExitCode::SUCCESS),
        Command::Baseline(args) => run_baseline(&args).map(|_| ExitCode::SUCCESS),
        Command::Compare(args) => run_compare(&args).map(|_| ExitCode::SUCCESS),
    }
}

fn load(args: &CommonArgs) -> Result<(ProblemConfig, Problem), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::io(format!("read {}: {e}", args.config.display())))?;
    let cfg = parse_config(&text)?;
    let problem = cfg.to_problem()?;
    Ok((cfg, problem))
}

fn effective_mode(args: &CommonArgs, problem: &Problem) -> FeedbackMode {
    match args.mode {
        Some(ModeArg::State) => FeedbackMode::State,
        Some(ModeArg::Output) => FeedbackMode::Output,
        None => problem.default_mode,
    }
}

fn out_dir(args: &CommonArgs, cfg: &ProblemConfig) -> PathBuf {
    args.out_dir.clone().unwrap_or_else(|| PathBuf::from(&cfg.outputs.directory))
}

fn run_validate(args: &CommonArgs) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::io(format!("read {}: {e}", args.config.display())))?;
    let outcome = parse_config(&text).and_then(|cfg| cfg.to_problem());
    let problem = match outcome {
        Ok(problem) => problem,
        Err(err) => {
            if !args.quiet {
                println!("FAIL");
                println!("  error: {err}");
            }
            eprintln!("{err}");
            return Ok(ExitCode::from(err.exit_code()));
        }
    };
    let report = validate_problem(&problem.system, &problem.cost, &problem.hmap);
    if !args.quiet {
        println!("{}", if report.passed() { "PASS" } else { "FAIL" });
        for e in &report.errors {
            println!("  error: {e}");
        }
        for w in &report.warnings {
            println!("  warning: {w}");
        }
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        let err = CliError::validation(report.errors.join("; "));
        eprintln!("{err}");
        Ok(ExitCode::from(1))
    }
}

fn run_solve(args: &CommonArgs) -> Result<(), CliError> {
    let (cfg, mut problem) = load(args)?;
    problem.solver.feedback_mode = effective_mode(args, &problem);
    let report = solve(
        &problem.system,
        &problem.cost,
        &problem.hmap,
        &problem.initial_state,
        &problem.solver,
    )?;
    let mut writer = ArtifactWriter::new(&out_dir(args, &cfg), &cfg.outputs.emit)?;
    writer.emit_solve(&report, &cfg)?;
    if !args.quiet {
        let max_residual = report.residuals.iter().cloned().fold(0.0f64, f64::max);
        println!("cost: {}", artifacts::fmt_f64(report.cost));
        println!("max residual: {}", artifacts::fmt_f64(max_residual));
        for w in &report.warnings {
            println!("warning: {w}");
        }
        for path in &writer.written {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn simulate_baseline_states(
    problem: &Problem,
    solution: &declq::CentralizedSolution,
) -> Vec<DVector<f64>> {
    let mut states = Vec::with_capacity(solution.gains.len() + 1);
    let mut state = problem.initial_state.clone();
    states.push(state.clone());
    for gain in &solution.gains {
        state = &problem.system.a * &state + &problem.system.b * (gain * &state);
        states.push(state.clone());
    }
    states
}

fn run_baseline(args: &CommonArgs) -> Result<(), CliError> {
    let (cfg, problem) = load(args)?;
    let solution = centralized_lqr(
        &problem.system,
        &problem.cost,
        problem.solver.horizon,
        &problem.initial_state,
    )?;
    let states = simulate_baseline_states(&problem, &solution);
    let mut writer = ArtifactWriter::new(&out_dir(args, &cfg), &cfg.outputs.emit)?;
    writer.emit_baseline(&solution, &states, &cfg)?;
    if !args.quiet {
        println!("cost: {}", artifacts::fmt_f64(solution.cost));
        for path in &writer.written {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn run_compare(args: &CommonArgs) -> Result<(), CliError> {
    let (cfg, mut problem) = load(args)?;
    problem.solver.feedback_mode = effective_mode(args, &problem);
    let dec = solve(
        &problem.system,
        &problem.cost,
        &problem.hmap,
        &problem.initial_state,
        &problem.solver,
    )?;
    let cen = centralized_lqr(
        &problem.system,
        &problem.cost,
        problem.solver.horizon,
        &problem.initial_state,
    )?;
    let comparison = compare(&dec, &cen)?;
    let mut writer = ArtifactWriter::new(&out_dir(args, &cfg), &cfg.outputs.emit)?;
    writer.emit_comparison(&comparison, dec.cost, cen.cost)?;
    if !args.quiet {
        println!("cost gap: {}", artifacts::fmt_f64(comparison.cost_gap));
        for path in &writer.written {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

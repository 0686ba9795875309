//! Command line entry point wiring ingestion, assumption checks, the
//! solver and report serialization.
//!
//! Exit codes: 0 success, 1 I/O or parse or usage errors, 2 assumption
//! failure, 3 iteration cap reached before certification. Machine output
//! goes to the selected output stream only; diagnostics go to stderr.

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::assumptions::{assumption_report_with, DEFAULT_TOL_CONE, DEFAULT_TOL_RANK};
use crate::ingest::{normalize, parse_returns_with_options, IngestError, ReturnMatrix};
use crate::report::{input_digest, surface_grid, to_json, RunReport};
use crate::solver::{optimize, refine_boundary, SolverError, SolverOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_ASSUMPTIONS: i32 = 2;
pub const EXIT_UNCERTIFIED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "optf",
    version,
    about = "Optimal-f position sizing over observed trade returns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the admissibility assumptions and print the report as JSON
    Check(CheckArgs),
    /// Check assumptions, then compute the optimal fraction vector
    Solve(SolveArgs),
    /// Export a TWR surface slice over two free systems as CSV
    Grid(GridArgs),
}

#[derive(Args, Debug)]
struct InputArgs {
    /// CSV file of absolute trade returns (periods by systems)
    #[arg(long)]
    input: PathBuf,
    /// Write machine output to this file instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Treat the first line as data even when it does not look numeric
    #[arg(long)]
    no_header: bool,
}

#[derive(Args, Debug)]
struct ToleranceArgs {
    /// Relative singular-value threshold of the rank check, in (0, 1)
    #[arg(long)]
    tol_rank: Option<f64>,
    /// Feasibility threshold of the no-risk-free check, in (0, 1)
    #[arg(long)]
    tol_cone: Option<f64>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tolerances: ToleranceArgs,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    tolerances: ToleranceArgs,
    /// Stopping threshold on the projected-gradient infinity norm, in (0, 1)
    #[arg(long)]
    tol_grad: Option<f64>,
    /// Iteration cap of the ascent loop
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct GridArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Lattice points per free axis (at least 2)
    #[arg(long, default_value_t = 100)]
    resolution: usize,
    /// Pin a system, e.g. --fix S3=0.1 or --fix 3=0.1 (repeatable)
    #[arg(long = "fix", value_name = "SYSTEM=VALUE")]
    fix: Vec<String>,
}

/// Runs the CLI on the given argv and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    check_thread_env();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_FAILURE,
            };
            let _ = err.print();
            return code;
        }
    };
    match cli.command {
        Command::Check(args) => run_check(args),
        Command::Solve(args) => run_solve(args),
        Command::Grid(args) => run_grid(args),
    }
}

/// The evaluation pipeline is sequential; OPTF_THREADS is accepted as an
/// upper bound on workers (0 or absent selects the default) and any
/// positive cap is honored trivially.
fn check_thread_env() {
    if let Ok(value) = std::env::var("OPTF_THREADS") {
        if !value.is_empty() && value.parse::<u32>().is_err() {
            eprintln!("warning: ignoring OPTF_THREADS={value:?}: not an unsigned integer");
        }
    }
}

fn run_check(args: CheckArgs) -> i32 {
    let Some(matrix) = read_matrix(&args.input) else {
        return EXIT_FAILURE;
    };
    let Some((tol_rank, tol_cone)) = resolve_tolerances(&args.tolerances) else {
        return EXIT_FAILURE;
    };
    let assumptions = match assumption_report_with(&matrix, tol_rank, tol_cone) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_FAILURE;
        }
    };
    let overall = assumptions.overall;
    let report = RunReport::new(input_digest(&matrix), assumptions, None);
    let code = emit(&args.input.output, &format!("{}\n", to_json(&report)));
    if code != EXIT_OK {
        code
    } else if overall {
        EXIT_OK
    } else {
        EXIT_ASSUMPTIONS
    }
}

fn run_solve(args: SolveArgs) -> i32 {
    let Some(matrix) = read_matrix(&args.input) else {
        return EXIT_FAILURE;
    };
    let Some((tol_rank, tol_cone)) = resolve_tolerances(&args.tolerances) else {
        return EXIT_FAILURE;
    };
    let mut opts = SolverOptions::default();
    match args.tol_grad {
        Some(v) if v > 0.0 && v < 1.0 => opts.tol_grad = v,
        Some(v) => {
            eprintln!("error: --tol-grad must lie in (0, 1), got {v}");
            return EXIT_FAILURE;
        }
        None => {}
    }
    match args.max_iter {
        Some(0) => {
            eprintln!("error: --max-iter must be at least 1");
            return EXIT_FAILURE;
        }
        Some(v) => opts.max_iter = v,
        None => {}
    }

    let assumptions = match assumption_report_with(&matrix, tol_rank, tol_cone) {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_FAILURE;
        }
    };
    let digest = input_digest(&matrix);
    if !assumptions.overall {
        eprintln!("error: input violates the admissibility assumptions; no solve attempted");
        let report = RunReport::new(digest, assumptions, None);
        let code = emit(&args.input.output, &format!("{}\n", to_json(&report)));
        return if code != EXIT_OK {
            code
        } else {
            EXIT_ASSUMPTIONS
        };
    }

    let returns = normalize(&matrix).expect("loss check passed for every column");
    match optimize(&returns, &opts) {
        Ok(result) => match refine_boundary(&returns, result, &opts) {
            Ok(refined) => {
                let report = RunReport::new(digest, assumptions, Some(refined));
                emit(&args.input.output, &format!("{}\n", to_json(&report)))
            }
            Err(err) => {
                eprintln!("error: {err}");
                EXIT_FAILURE
            }
        },
        Err(SolverError::MaxIterations { result }) => {
            eprintln!(
                "warning: iteration cap reached; reporting the best iterate without certification"
            );
            let report = RunReport::new(digest, assumptions, Some(*result));
            let code = emit(&args.input.output, &format!("{}\n", to_json(&report)));
            if code != EXIT_OK {
                code
            } else {
                EXIT_UNCERTIFIED
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_FAILURE
        }
    }
}

fn run_grid(args: GridArgs) -> i32 {
    if args.resolution < 2 {
        eprintln!("error: --resolution must be at least 2");
        return EXIT_FAILURE;
    }
    let Some(matrix) = read_matrix(&args.input) else {
        return EXIT_FAILURE;
    };
    let returns = match normalize(&matrix) {
        Ok(returns) => returns,
        Err(err @ IngestError::NoLossInColumn { .. }) => {
            eprintln!("error: {err}");
            return EXIT_ASSUMPTIONS;
        }
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_FAILURE;
        }
    };
    let mut fixed = Vec::with_capacity(args.fix.len());
    for spec in &args.fix {
        match parse_fix(&matrix, spec) {
            Some(assignment) => fixed.push(assignment),
            None => {
                eprintln!(
                    "error: cannot parse --fix {spec:?}; expected SYSTEM=VALUE with a known \
                     system name or 1-based number and a non-negative value"
                );
                return EXIT_FAILURE;
            }
        }
    }
    match surface_grid(&returns, args.resolution, &fixed) {
        Ok(csv) => emit(&args.input.output, &csv),
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_FAILURE
        }
    }
}

fn read_matrix(input: &InputArgs) -> Option<ReturnMatrix> {
    let text = match std::fs::read_to_string(&input.input) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("error: cannot read {}: {err}", input.input.display());
            return None;
        }
    };
    match parse_returns_with_options(&text, input.no_header) {
        Ok(matrix) => Some(matrix),
        Err(err) => {
            eprintln!("error: {}: {err}", input.input.display());
            None
        }
    }
}

fn resolve_tolerances(args: &ToleranceArgs) -> Option<(f64, f64)> {
    let tol_rank = unit_override("tol-rank", args.tol_rank, DEFAULT_TOL_RANK)?;
    let tol_cone = unit_override("tol-cone", args.tol_cone, DEFAULT_TOL_CONE)?;
    Some((tol_rank, tol_cone))
}

fn unit_override(name: &str, value: Option<f64>, default: f64) -> Option<f64> {
    match value {
        None => Some(default),
        Some(v) if v > 0.0 && v < 1.0 => Some(v),
        Some(v) => {
            eprintln!("error: --{name} must lie in (0, 1), got {v}");
            None
        }
    }
}

/// Resolves "SYSTEM=VALUE" against the system names, falling back to a
/// 1-based system number.
fn parse_fix(matrix: &ReturnMatrix, spec: &str) -> Option<(usize, f64)> {
    let (name, value) = spec.split_once('=')?;
    let name = name.trim();
    let value: f64 = value.trim().parse().ok()?;
    if !value.is_finite() || value < 0.0 {
        return None;
    }
    let system = match matrix
        .system_names()
        .iter()
        .position(|candidate| candidate == name)
    {
        Some(index) => index + 1,
        None => {
            let number: usize = name.parse().ok()?;
            if (1..=matrix.n_systems()).contains(&number) {
                number
            } else {
                return None;
            }
        }
    };
    Some((system, value))
}

fn emit(target: &Option<PathBuf>, payload: &str) -> i32 {
    match target {
        Some(path) => {
            if let Err(err) = std::fs::write(path, payload) {
                eprintln!("error: cannot write {}: {err}", path.display());
                EXIT_FAILURE
            } else {
                EXIT_OK
            }
        }
        None => {
            print!("{payload}");
            EXIT_OK
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use miw::harness::{check_mass_sandwich, distances, fit_xn_scaling, sweep, ConvergenceRecord};
use miw::io::{density_samples, read_positions, write_density, write_json, write_positions, write_sweep, Format};
use miw::manifest::RunManifest;
use miw_core::density::{build_step_density, empirical_integral, empirical_mass, BoundaryTerm};
use miw_core::energy::average_hamiltonian;
use miw_core::model::{WorldConfiguration, HALF_LINE_MASS};
use miw_core::solver::{solve_configuration, validate_configuration, PrecisionMode, SolverConfig};
use serde::Serialize;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "miw",
    version,
    about = "Interacting-worlds solver for the 1D Coulomb first excited state"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the configuration at one or more world counts and write positions.
    Solve(SolveArgs),
    /// Write the stepped density next to the target density.
    Density(DensityArgs),
    /// Solve a range of world counts and write convergence metrics.
    Sweep(SweepArgs),
    /// Print the energy report of a configuration as JSON.
    Energy(EnergyArgs),
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Root-finding tolerance on the boundary residual.
    #[arg(long, default_value_t = 1e-12, value_parser = positive_f64)]
    tol: f64,
    /// Arithmetic used in the recursion.
    #[arg(long, default_value = "standard", value_parser = parse_precision)]
    precision: PrecisionMode,
    /// Evaluation limit for the root search.
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tol,
            max_iterations: self.max_iterations,
            precision: self.precision,
            bracket_hint: None,
        }
    }
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Output directory.
    #[arg(long, env = "MIW_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// World counts: `11`, `11,21`, `1..200` or `10..200:10`.
    #[arg(long, value_parser = parse_n_list)]
    n: NList,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Tolerance for the post-solve validation checks.
    #[arg(long, default_value_t = 1e-9, value_parser = positive_f64)]
    check_tol: f64,
}

#[derive(Args)]
#[group(id = "source", required = true, multiple = false, args = ["n", "config"])]
struct SourceArgs {
    /// Solve this many half-line worlds.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    /// Read positions from a `.csv` or `.json` file instead of solving.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Mirror the density onto the negative half-line.
    #[arg(long)]
    full_line: bool,
    /// Uniform grid points merged with the breakpoints.
    #[arg(long, default_value_t = 400)]
    grid: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// World counts: `11`, `11,21`, `1..200` or `10..200:10`.
    #[arg(long, value_parser = parse_n_list)]
    n: NList,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// Worker threads.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
}

#[derive(Args)]
struct EnergyArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Debug)]
struct NList(Vec<usize>);

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive and finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_precision(s: &str) -> Result<PrecisionMode, String> {
    s.parse().map_err(|_| "expected `standard` or `extended`".to_owned())
}

fn parse_count(s: &str) -> Result<usize, String> {
    let n: usize = s.trim().parse().map_err(|_| format!("`{s}` is not a world count"))?;
    if n == 0 {
        return Err("world counts start at 1".to_owned());
    }
    Ok(n)
}

/// Comma-separated items, each `N`, `A..B` or `A..B:STEP` (inclusive).
/// Duplicates are dropped and the result is sorted.
fn parse_n_list(s: &str) -> Result<NList, String> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err("empty world count".to_owned());
        }
        match item.split_once("..") {
            None => out.push(parse_count(item)?),
            Some((lo, rest)) => {
                let rest = rest.strip_prefix('=').unwrap_or(rest);
                let (hi, step) = match rest.split_once(':') {
                    Some((hi, step)) => (hi, parse_count(step)?),
                    None => (rest, 1),
                };
                let (lo, hi) = (parse_count(lo)?, parse_count(hi)?);
                if lo > hi {
                    return Err(format!("empty range `{item}`"));
                }
                out.extend((lo..=hi).step_by(step));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(NList(out))
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Compute(e.to_string())
    }
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))
}

fn load(source: &SourceArgs, solver: &SolverArgs) -> Result<(WorldConfiguration, Option<PathBuf>), Failure> {
    match (&source.n, &source.config) {
        (Some(n), None) => Ok((solve_configuration(*n as usize, &solver.config())?, None)),
        (None, Some(path)) => {
            let cfg = read_positions(path).map_err(|e| match e {
                miw::io::IoError::UnknownFormat { .. } => Failure::Usage(e.to_string()),
                other => Failure::Compute(other.to_string()),
            })?;
            Ok((cfg, Some(path.clone())))
        }
        _ => Err(Failure::Usage("exactly one of --n and --config is required".to_owned())),
    }
}

fn run_solve(args: SolveArgs) -> Result<(), Failure> {
    prepare_out(&args.output.out)?;
    let config = args.solver.config();
    let mut failed = Vec::new();
    for &n in &args.n.0 {
        let start = Instant::now();
        let cfg = match solve_configuration(n, &config) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("N = {n}: {e}");
                failed.push(n);
                continue;
            }
        };
        let elapsed = start.elapsed().as_secs_f64();
        let report = validate_configuration(&cfg, args.check_tol);
        let path = args
            .output
            .out
            .join(format!("positions_N{n}.{}", args.output.format.extension()));
        write_positions(&path, &cfg, args.output.format)?;
        let mut manifest = RunManifest::new("solve", args.solver.precision.as_str())
            .parameter("n_worlds", n)
            .parameter("tolerance", args.solver.tol)
            .parameter("max_iterations", args.solver.max_iterations)
            .parameter("check_tol", args.check_tol)
            .parameter("validation", &report)
            .parameter("solve_meta", cfg.solve_meta());
        manifest.outputs.push(path.clone());
        manifest.write_beside(&path)?;
        let status = if report.all_passed() { "ok" } else { "CHECK FAILED" };
        println!(
            "N = {n}: x_1 = {:.17}, x_N = {:.17}, |F| = {:.3e}, {:.3} ms, {status}",
            cfg.x1(),
            cfg.x_last(),
            cfg.boundary_residual().abs(),
            elapsed * 1e3
        );
        for c in report.failures() {
            eprintln!(
                "N = {n}: {} measured {:.3e}, limit {:.3e}",
                c.kind.name(),
                c.measured,
                c.limit
            );
        }
        if !report.all_passed() {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Compute(format!("failed for N in {failed:?}")))
    }
}

fn run_density(args: DensityArgs) -> Result<(), Failure> {
    prepare_out(&args.output.out)?;
    let (cfg, input) = load(&args.source, &args.solver)?;
    let step = build_step_density(&cfg)?;
    let samples = density_samples(&step, args.grid, args.full_line);
    let n = cfg.n_worlds();
    let path = args
        .output
        .out
        .join(format!("density_N{n}.{}", args.output.format.extension()));
    write_density(&path, &samples, args.output.format)?;
    let d = distances(&cfg)?;
    let masses = DensityMasses {
        n_worlds: n,
        mass_no_boundary: empirical_mass(&step, BoundaryTerm::Exclude),
        mass_with_boundary: empirical_mass(&step, BoundaryTerm::Include),
        integral: empirical_integral(&step),
        target_half_line_mass: HALF_LINE_MASS,
        distances: d,
    };
    let masses_path = args.output.out.join(format!("density_N{n}.masses.json"));
    write_json(&masses_path, &masses)?;
    let mut manifest = RunManifest::new("density", args.solver.precision.as_str())
        .parameter("n_worlds", n)
        .parameter("full_line", args.full_line)
        .parameter("grid", args.grid)
        .parameter("distances", d);
    manifest.inputs.extend(input);
    manifest.outputs.push(path.clone());
    manifest.outputs.push(masses_path);
    manifest.write_beside(&path)?;
    println!(
        "N = {n}: mass {:.6}, {} samples, L1 = {:.6e}, sup = {:.6e}, mass deficit = {:.6e}",
        masses.mass_no_boundary,
        samples.len(),
        d.l1,
        d.sup,
        d.mass_deficit
    );
    Ok(())
}

#[derive(Serialize)]
struct DensityMasses {
    n_worlds: usize,
    mass_no_boundary: f64,
    mass_with_boundary: f64,
    integral: f64,
    target_half_line_mass: f64,
    distances: miw::harness::Distances,
}

#[derive(Serialize)]
struct SweepSummary {
    scaling_fit: Option<miw::harness::ScalingFit>,
    scaling_fit_error: Option<String>,
    sandwich: miw::harness::SandwichReport,
    failed: Vec<usize>,
}

fn run_sweep(args: SweepArgs) -> Result<(), Failure> {
    prepare_out(&args.output.out)?;
    if args.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".to_owned()));
    }
    let entries = sweep(&args.n.0, &args.solver.config(), args.jobs).map_err(|e| Failure::Usage(e.to_string()))?;
    let path = args
        .output
        .out
        .join(format!("sweep.{}", args.output.format.extension()));
    write_sweep(&path, &entries, args.output.format)?;

    let records: Vec<ConvergenceRecord> = entries
        .iter()
        .filter_map(|e| e.outcome.as_ref().ok().cloned())
        .collect();
    let failed: Vec<usize> = entries
        .iter()
        .filter(|e| e.outcome.is_err())
        .map(|e| e.n_worlds)
        .collect();
    let fit = fit_xn_scaling(&records);
    let summary = SweepSummary {
        scaling_fit_error: fit.as_ref().err().map(|e| e.to_string()),
        scaling_fit: fit.ok(),
        sandwich: check_mass_sandwich(&records),
        failed: failed.clone(),
    };
    let summary_path = args.output.out.join("sweep_summary.json");
    write_json(&summary_path, &summary)?;

    let mut manifest = RunManifest::new("sweep", args.solver.precision.as_str())
        .parameter("n_values", &args.n.0)
        .parameter("tolerance", args.solver.tol)
        .parameter("max_iterations", args.solver.max_iterations)
        .parameter("jobs", args.jobs);
    manifest.outputs.push(path.clone());
    manifest.outputs.push(summary_path);
    manifest.write_beside(&path)?;

    println!("{} world counts solved, {} failed", records.len(), failed.len());
    match &summary.scaling_fit {
        Some(fit) => println!(
            "x_N ~ N^(-1/a): a = {:.4}, rms residual {:.3e}",
            fit.exponent_a, fit.residual
        ),
        None => println!(
            "x_N scaling fit skipped: {}",
            summary.scaling_fit_error.as_deref().unwrap_or("")
        ),
    }
    println!(
        "mass sandwich: lower {}, upper {}, deficit monotone {}",
        summary.sandwich.lower_holds, summary.sandwich.upper_holds, summary.sandwich.deficit_monotone
    );
    for e in entries.iter().filter(|e| e.outcome.is_err()) {
        if let Err(err) = &e.outcome {
            eprintln!("N = {}: {err}", e.n_worlds);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Compute(format!("failed for N in {failed:?}")))
    }
}

fn run_energy(args: EnergyArgs) -> Result<(), Failure> {
    let (cfg, _) = load(&args.source, &args.solver)?;
    let report = average_hamiltonian(&cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => run_solve(a),
        Command::Density(a) => run_density(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Energy(a) => run_energy(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

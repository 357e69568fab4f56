//! Convergence-study harness for the narrow-stencil finite difference
//! solver: solves a benchmark problem over a refinement sequence and emits
//! the (h, max-norm error, observed order) table as CSV or Markdown.
//!
//! Exit codes: 0 on full success, 2 when any row is flagged as
//! non-converged, 1 on errors.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use narrow_stencil::convergence::{
    default_grids, emit, emit_to_path, run_convergence, OutputFormat, RunConfig,
};
use narrow_stencil::solver::{PseudoTimeStep, SolveMethod, SolverConfig};

#[derive(Parser, Debug)]
#[command(
    name = "hjb-bench",
    about = "Refinement studies for the stabilized narrow-stencil solver",
    version
)]
struct Cli {
    /// Benchmark problem: test1, test2, or test3.
    #[arg(long)]
    problem: Option<String>,

    /// Comma-separated grid sizes, e.g. 40x40,60x60,80x80.
    #[arg(long)]
    grids: Option<String>,

    /// Numerical moment coefficient.
    #[arg(long)]
    gamma: Option<f64>,

    /// Numerical viscosity coefficient.
    #[arg(long)]
    beta: Option<f64>,

    /// Solver: newton, euler, or newton-fallback.
    #[arg(long)]
    solver: Option<String>,

    /// Pseudo time-step: "auto" or a positive number (pseudo-time solver).
    #[arg(long)]
    rho: Option<String>,

    /// Max-norm residual stopping tolerance.
    #[arg(long)]
    tol_residual: Option<f64>,

    /// Euclidean update-norm stopping tolerance.
    #[arg(long)]
    tol_update: Option<f64>,

    /// Iteration cap per grid.
    #[arg(long)]
    max_iters: Option<usize>,

    /// Initial Newton step fraction in (0, 1].
    #[arg(long)]
    damping: Option<f64>,

    /// Angle samples for problems with a sampled control set.
    #[arg(long)]
    nphi: Option<usize>,

    /// Rotation samples for problems with a sampled control set.
    #[arg(long)]
    nrot: Option<usize>,

    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format: csv or markdown.
    #[arg(long)]
    format: Option<String>,

    /// Include the most expensive rows of the reference tables.
    #[arg(long)]
    finest_unlock: bool,

    /// Solve independent grids on worker threads.
    #[arg(long)]
    parallel: bool,

    /// Flat key=value config file with the same keys as the long flags;
    /// command-line flags override file entries.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {} is not key=value: {raw:?}", lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_grids(text: &str) -> Result<Vec<(usize, usize)>, String> {
    text.split(',')
        .map(|chunk| {
            let chunk = chunk.trim();
            let (a, b) = chunk
                .split_once('x')
                .ok_or_else(|| format!("grid entry {chunk:?} is not J1xJ2"))?;
            let j1 = a.trim().parse().map_err(|e| format!("bad grid size {a:?}: {e}"))?;
            let j2 = b.trim().parse().map_err(|e| format!("bad grid size {b:?}: {e}"))?;
            Ok((j1, j2))
        })
        .collect()
}

struct Settings {
    run: RunConfig,
    out: Option<PathBuf>,
    format: OutputFormat,
}

fn resolve(cli: Cli) -> Result<Settings, String> {
    let file = match &cli.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let pick = |flag: Option<String>, key: &str| -> Option<String> {
        flag.or_else(|| file.get(key).cloned())
    };
    let parse_f64 = |flag: Option<f64>, key: &str| -> Result<Option<f64>, String> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => file
                .get(key)
                .map(|s| s.parse().map_err(|e| format!("config {key}: {e}")))
                .transpose(),
        }
    };
    let parse_usize = |flag: Option<usize>, key: &str| -> Result<Option<usize>, String> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => file
                .get(key)
                .map(|s| s.parse().map_err(|e| format!("config {key}: {e}")))
                .transpose(),
        }
    };
    let flag_true = |key: &str| -> bool {
        file.get(key).map(|s| s == "true" || s == "1").unwrap_or(false)
    };

    let problem = pick(cli.problem, "problem").unwrap_or_else(|| "test1".to_string());
    let finest_unlock = cli.finest_unlock || flag_true("finest-unlock");
    let grid_sizes = match pick(cli.grids, "grids") {
        Some(text) => parse_grids(&text)?,
        None => default_grids(&problem, finest_unlock),
    };

    let mut solver = SolverConfig::default();
    solver.method = match pick(cli.solver, "solver").as_deref() {
        None | Some("newton") => SolveMethod::Newton,
        Some("euler") => SolveMethod::Euler,
        Some("newton-fallback") => SolveMethod::NewtonWithEulerFallback,
        Some(other) => return Err(format!("unknown solver {other:?}")),
    };
    solver.rho = match pick(cli.rho, "rho").as_deref() {
        None | Some("auto") => PseudoTimeStep::Auto,
        Some(text) => {
            let value: f64 = text.parse().map_err(|e| format!("bad rho {text:?}: {e}"))?;
            PseudoTimeStep::Fixed(value)
        }
    };
    if let Some(v) = parse_f64(cli.tol_residual, "tol-residual")? {
        solver.tol_residual = v;
    }
    if let Some(v) = parse_f64(cli.tol_update, "tol-update")? {
        solver.tol_update = v;
    }
    if let Some(v) = parse_usize(cli.max_iters, "max-iters")? {
        solver.max_iters = v;
    }
    if let Some(v) = parse_f64(cli.damping, "damping")? {
        solver.damping = v;
    }

    let n_phi = parse_usize(cli.nphi, "nphi")?.unwrap_or(8);
    let n_rot = parse_usize(cli.nrot, "nrot")?.unwrap_or(16);

    let format = match pick(cli.format, "format").as_deref() {
        None | Some("csv") => OutputFormat::Csv,
        Some("markdown") => OutputFormat::Markdown,
        Some(other) => return Err(format!("unknown format {other:?}")),
    };
    let out = cli
        .out
        .or_else(|| file.get("out").map(PathBuf::from));

    let mut run = RunConfig::new(&problem, grid_sizes);
    if let Some(v) = parse_f64(cli.gamma, "gamma")? {
        run.gamma = v;
    }
    if let Some(v) = parse_f64(cli.beta, "beta")? {
        run.beta = v;
    }
    run.solver = solver;
    run.control_sampling = Some((n_phi, n_rot));
    run.parallel = cli.parallel || flag_true("parallel");

    Ok(Settings { run, out, format })
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let settings = match resolve(cli) {
        Ok(s) => s,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };

    let rows = match run_convergence(&settings.run) {
        Ok(rows) => rows,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };

    let write_result = match &settings.out {
        Some(path) => emit_to_path(&rows, settings.format, path),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            emit(&rows, settings.format, &mut lock).and_then(|()| lock.flush())
        }
    };
    if let Err(err) = write_result {
        eprintln!("error: {err}");
        return ExitCode::from(1);
    }

    if rows.iter().any(|row| !row.converged) {
        log::warn!("one or more rows did not converge");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}

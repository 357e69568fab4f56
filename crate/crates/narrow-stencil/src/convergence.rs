//! Refinement studies against manufactured solutions: per-grid solves,
//! max-norm errors, observed orders, stability norms, and table emission.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{DomainBox, GridError, GridFunction, GridSpec};
use crate::linalg::DimVec;
use crate::problems::{problem_by_name, ManufacturedProblem, PdeOperator, ProblemError};
use crate::scheme::{SchemeError, SchemeParams};
use crate::solver::{self, SolverConfig, SolverError};
use crate::stencil::{self, StencilError, Width};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("order computation needs positive errors and h_fine < h_coarse")]
    BadOrderInputs,
    #[error("grid list must refine strictly (mesh size decreasing)")]
    NotRefining,
    #[error("problem {0:?} has no exact solution; convergence study impossible")]
    NoExactSolution(String),
}

/// One row of a refinement table. `h` is the cell diagonal
/// `sqrt(sum h_i^2)`, the mesh-size convention of the benchmark tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error_linf: f64,
    pub order: Option<f64>,
    pub converged: bool,
}

/// Output table format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

/// Configuration of one refinement study.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub grid_sizes: Vec<(usize, usize)>,
    pub gamma: f64,
    pub beta: f64,
    pub solver: SolverConfig,
    /// `(n_phi, n_rot)` lattice for problems with sampled control sets.
    pub control_sampling: Option<(usize, usize)>,
    /// Solve the grids on worker threads (rows stay in refinement order).
    pub parallel: bool,
}

impl RunConfig {
    pub fn new(problem: &str, grid_sizes: Vec<(usize, usize)>) -> Self {
        Self {
            problem: problem.to_string(),
            grid_sizes,
            gamma: 4.0,
            beta: 0.0,
            solver: SolverConfig::default(),
            control_sampling: None,
            parallel: false,
        }
    }
}

/// Observed order `ln(e_coarse / e_fine) / ln(h_coarse / h_fine)`.
pub fn compute_order(
    e_coarse: f64,
    e_fine: f64,
    h_coarse: f64,
    h_fine: f64,
) -> Result<f64, BenchError> {
    if !(e_coarse > 0.0 && e_fine > 0.0 && h_coarse > 0.0 && h_fine > 0.0 && h_fine < h_coarse) {
        return Err(BenchError::BadOrderInputs);
    }
    Ok((e_coarse / e_fine).ln() / (h_coarse / h_fine).ln())
}

/// Norms of a solved grid function: max-norm error over all mesh nodes,
/// the `(prod h_i^{1/2})`-weighted interior Euclidean norm of the solution,
/// and the per-axis weighted norms of its `2h` second differences (ghosts
/// must be filled).
#[derive(Debug, Clone)]
pub struct Norms {
    pub linf_error: f64,
    pub weighted_l2: f64,
    pub h2_diag: DimVec,
}

pub fn norms(u: &GridFunction, exact: &dyn Fn(&[f64]) -> f64) -> Result<Norms, BenchError> {
    let grid = u.grid().clone();
    let d = grid.dim();
    let weight: f64 = (0..d).map(|i| grid.spacing(i).sqrt()).product();

    let mut linf_error = 0.0f64;
    for idx in grid.mesh_indices() {
        let x = grid.node_coord(&idx)?;
        linf_error = linf_error.max((u.value(&idx)? - exact(&x)).abs());
    }

    let mut sum_sq = 0.0f64;
    let mut diag_sq = vec![0.0f64; d];
    for idx in grid.interior_indices() {
        let v = u.value(&idx)?;
        sum_sq += v * v;
        for (axis, acc) in diag_sq.iter_mut().enumerate() {
            let d2 = stencil::second_diff(u, &idx, axis, Width::TwoH)?;
            *acc += d2 * d2;
        }
    }
    Ok(Norms {
        linf_error,
        weighted_l2: weight * sum_sq.sqrt(),
        h2_diag: diag_sq.iter().map(|s| weight * s.sqrt()).collect(),
    })
}

/// Node count per axis that reproduces a target cell-diagonal mesh size on
/// the given domain (square node counts across axes).
pub fn grid_for_diagonal_h(domain: &DomainBox, h_target: f64) -> (usize, usize) {
    let diag = (domain.width(0).powi(2) + domain.width(1).powi(2)).sqrt();
    let j = (diag / h_target).round() as usize + 1;
    (j, j)
}

/// The benchmark refinement sequences at desk scale; `finest_unlock` adds
/// the most expensive rows of the reference tables.
pub fn default_grids(problem: &str, finest_unlock: bool) -> Vec<(usize, usize)> {
    let js: Vec<usize> = match (problem, finest_unlock) {
        ("test1", false) => vec![40, 60, 80, 120],
        ("test1", true) => vec![40, 60, 80, 120, 160, 200],
        ("test2", false) => vec![16, 24, 32],
        ("test2", true) => vec![16, 24, 32, 40, 50],
        ("test3", false) => vec![24, 32, 40, 50],
        ("test3", true) => vec![24, 32, 40, 50, 64, 100],
        _ => vec![9, 17, 33],
    };
    js.into_iter().map(|j| (j, j)).collect()
}

fn solve_one_grid(
    problem: &ManufacturedProblem,
    params: &SchemeParams,
    solver_cfg: &SolverConfig,
    sizes: (usize, usize),
) -> Result<(f64, f64, bool), BenchError> {
    let grid = Arc::new(GridSpec::new(problem.domain.clone(), &[sizes.0, sizes.1])?);
    let h = grid.h_diag();
    let u0 = GridFunction::zeros_on_mesh(grid.clone());
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| BenchError::NoExactSolution(problem.name.clone()))?;
    let outcome = solver::solve(&u0, solver_cfg, params, &problem.operator, &*problem.boundary);
    match outcome {
        Ok(report) => {
            let n = norms(&report.solution, &*exact.value)?;
            Ok((h, n.linf_error, report.converged))
        }
        Err(SolverError::DidNotConverge { report, .. }) => {
            let n = norms(&report.solution, &*exact.value)?;
            Ok((h, n.linf_error, false))
        }
        Err(err) => Err(err.into()),
    }
}

/// Runs the refinement study: solves every grid from the zero initial
/// guess, measures max-norm errors against the exact solution, and fills in
/// observed orders. Rows where the solver did not converge are flagged and
/// the run continues.
pub fn run_convergence(cfg: &RunConfig) -> Result<Vec<ConvergenceRow>, BenchError> {
    let (n_phi, n_rot) = cfg.control_sampling.unwrap_or((8, 16));
    let problem = problem_by_name(&cfg.problem, n_phi, n_rot)?;
    if problem.exact.is_none() {
        return Err(BenchError::NoExactSolution(problem.name.clone()));
    }
    let params = SchemeParams::checked(cfg.gamma, cfg.beta, problem.operator.ellipticity())?;

    // Refinement must be strict.
    {
        let mut prev = f64::INFINITY;
        for &(j1, j2) in &cfg.grid_sizes {
            let grid = GridSpec::new(problem.domain.clone(), &[j1, j2])?;
            if grid.h_diag() >= prev {
                return Err(BenchError::NotRefining);
            }
            prev = grid.h_diag();
        }
    }

    let results: Vec<Result<(f64, f64, bool), BenchError>> = if cfg.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = cfg
                .grid_sizes
                .iter()
                .map(|&sizes| {
                    let problem = &problem;
                    let params = &params;
                    let solver_cfg = &cfg.solver;
                    scope.spawn(move || solve_one_grid(problem, params, solver_cfg, sizes))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("solver thread")).collect()
        })
    } else {
        cfg.grid_sizes
            .iter()
            .map(|&sizes| solve_one_grid(&problem, &params, &cfg.solver, sizes))
            .collect()
    };

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(results.len());
    for result in results {
        let (h, error_linf, converged) = result?;
        if !converged {
            log::warn!("solver did not converge on the grid with h = {h:.3e}; row flagged");
        }
        let order = rows.last().and_then(|prev: &ConvergenceRow| {
            compute_order(prev.error_linf, error_linf, prev.h, h).ok()
        });
        rows.push(ConvergenceRow {
            h,
            error_linf,
            order,
            converged,
        });
    }
    Ok(rows)
}

/// C-style scientific notation with three significant digits and a signed
/// two-digit exponent (the table convention: `3.63e-02`).
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.2e}");
    let (mant, exp) = s.split_once('e').expect("exponent marker");
    let e: i32 = exp.parse().expect("exponent digits");
    let sign = if e < 0 { '-' } else { '+' };
    format!("{mant}e{sign}{:02}", e.abs())
}

/// Writes rows in the requested format. CSV columns are
/// `h,error_linf,order` with the order cell empty on the first row;
/// Markdown mirrors the reference table layout.
pub fn emit<W: Write>(rows: &[ConvergenceRow], format: OutputFormat, out: &mut W) -> std::io::Result<()> {
    match format {
        OutputFormat::Csv => {
            writeln!(out, "h,error_linf,order")?;
            for row in rows {
                let order = row.order.map(|o| format!("{o:.2}")).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{}",
                    format_sci(row.h),
                    format_sci(row.error_linf),
                    order
                )?;
            }
        }
        OutputFormat::Markdown => {
            writeln!(out, "| h | Error | Order |")?;
            writeln!(out, "| --- | --- | --- |")?;
            for row in rows {
                let order = row.order.map(|o| format!("{o:.2}")).unwrap_or_default();
                writeln!(
                    out,
                    "| {} | {} | {} |",
                    format_sci(row.h),
                    format_sci(row.error_linf),
                    order
                )?;
            }
        }
    }
    Ok(())
}

pub fn emit_to_path(
    rows: &[ConvergenceRow],
    format: OutputFormat,
    path: &Path,
) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    emit(rows, format, &mut file)
}

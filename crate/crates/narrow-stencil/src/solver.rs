//! Solvers for the discrete system: the pseudo-time forward-Euler
//! fixed-point iteration and a damped Newton method with a finite-difference
//! Jacobian assembled by offset coloring into a banded matrix.

pub mod banded;

use thiserror::Error;

use crate::grid::{GridFunction, GridSpec, MultiIndex};
use crate::problems::PdeOperator;
use crate::scheme::{self, SchemeError, SchemeParams};

use banded::BandedMatrix;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error("pseudo time-step must be nonnegative, got {0}")]
    NegativeRho(f64),
    #[error("residual became non-finite")]
    NonFiniteResidual,
    #[error("Jacobian is numerically singular at column {column}")]
    SingularJacobian { column: usize },
    #[error("line search failed to reduce the residual")]
    LineSearchFailed,
    #[error("iteration diverged: update ratio stayed above 1 after {halvings} step halvings")]
    DidNotConverge {
        halvings: usize,
        report: Box<SolveReport>,
    },
    #[error("configuration invalid: {0}")]
    BadConfig(String),
}

/// Pseudo time-step selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PseudoTimeStep {
    /// Start from the stability-bound estimate and halve on divergence.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Euler,
    Newton,
    NewtonWithEulerFallback,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub rho: PseudoTimeStep,
    /// Max-norm residual stopping tolerance.
    pub tol_residual: f64,
    /// Euclidean-norm update stopping tolerance.
    pub tol_update: f64,
    pub max_iters: usize,
    pub method: SolveMethod,
    /// Initial Newton step fraction in (0, 1].
    pub damping: f64,
    /// Consecutive growing updates tolerated before halving (or giving up).
    pub divergence_window: usize,
    /// Step halvings allowed in Auto mode before reporting divergence.
    pub max_halvings: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: PseudoTimeStep::Auto,
            tol_residual: 1e-8,
            tol_update: 1e-10,
            max_iters: 600_000,
            method: SolveMethod::Newton,
            damping: 1.0,
            divergence_window: 20,
            max_halvings: 40,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if self.tol_residual <= 0.0 || self.tol_update <= 0.0 {
            return Err(SolverError::BadConfig("tolerances must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(SolverError::BadConfig("max_iters must be at least 1".into()));
        }
        if !(0.0 < self.damping && self.damping <= 1.0) {
            return Err(SolverError::BadConfig("damping must lie in (0, 1]".into()));
        }
        if let PseudoTimeStep::Fixed(r) = self.rho {
            if r <= 0.0 {
                return Err(SolverError::BadConfig("fixed rho must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_update_norm: f64,
    /// Per-iteration ratios of consecutive Euclidean update norms.
    pub contraction_estimates: Vec<f64>,
    pub converged: bool,
}

/// Initial pseudo time-step from the coefficient bounds: the reciprocal of a
/// max-norm bound on the slope of the stabilized operator.
pub fn auto_rho(params: &SchemeParams, op: &dyn PdeOperator, grid: &GridSpec) -> f64 {
    let ell = op.ellipticity();
    let mut denom = ell.u_upper;
    for i in 0..grid.dim() {
        denom += ell.hessian_upper * 4.0 / grid.spacing(i).powi(2);
        denom += params.beta * 2.0 / grid.spacing(i);
        for j in 0..grid.dim() {
            denom += params.gamma * 8.0 / (grid.spacing(i) * grid.spacing(j));
        }
    }
    if denom > 0.0 {
        1.0 / denom
    } else {
        1.0
    }
}

fn interior_l2(grid: &GridSpec, values: &GridFunction) -> f64 {
    let mut s = 0.0;
    for idx in grid.interior_indices() {
        let v = values.value(&idx).unwrap_or(0.0);
        s += v * v;
    }
    s.sqrt()
}

/// One forward-Euler pseudo-time step: interior values move against the
/// residual, boundary values are reset to `g`, ghosts are re-closed.
pub fn euler_step(
    u: &GridFunction,
    rho: f64,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<GridFunction, SolverError> {
    if rho < 0.0 {
        return Err(SolverError::NegativeRho(rho));
    }
    let grid = u.grid().clone();
    let mut current = u.clone();
    let mut residual = GridFunction::unset(grid.clone());
    let max_abs = scheme::residual_into(&mut current, params, op, g, &mut residual)?;
    if !max_abs.is_finite() {
        return Err(SolverError::NonFiniteResidual);
    }
    let mut next = current.clone();
    for idx in grid.interior_indices() {
        let k = next.flat_of(&idx);
        let r = residual.value_flat(k).expect("interior residual set");
        let v = current.value_flat(k).expect("interior value set");
        next.set_flat(k, v - rho * r);
    }
    scheme::ghost_fill(&mut next)?;
    Ok(next)
}

/// Iterates the pseudo-time map until the residual max-norm or the update
/// norm drops below tolerance. In Auto mode the step is halved whenever the
/// update norm grows for `divergence_window` consecutive iterations.
pub fn solve_fixed_point(
    u0: &GridFunction,
    cfg: &SolverConfig,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    let grid = u0.grid().clone();
    let (mut rho, auto) = match cfg.rho {
        PseudoTimeStep::Fixed(r) => (r, false),
        PseudoTimeStep::Auto => (auto_rho(params, op, &grid), true),
    };
    log::debug!("fixed-point iteration with rho = {rho:.3e}");

    let mut u = u0.clone();
    let mut last_good = u.clone();
    let mut residual = GridFunction::unset(grid.clone());
    let mut ratios: Vec<f64> = Vec::new();
    let mut prev_update: Option<f64> = None;
    let mut streak = 0usize;
    let mut halvings = 0usize;
    let mut final_residual = f64::INFINITY;
    let mut final_update = f64::INFINITY;
    let mut iterations = 0usize;
    let mut converged = false;

    while iterations < cfg.max_iters {
        let max_abs = scheme::residual_into(&mut u, params, op, g, &mut residual)?;
        final_residual = max_abs;
        if max_abs <= cfg.tol_residual {
            converged = true;
            break;
        }

        let update_norm = rho * interior_l2(&grid, &residual);
        let diverging = !update_norm.is_finite()
            || prev_update.map(|p| update_norm > p).unwrap_or(false);
        if let Some(p) = prev_update {
            if update_norm.is_finite() && p > 0.0 {
                ratios.push(update_norm / p);
            }
        }
        if diverging {
            streak += 1;
        } else {
            streak = 0;
            last_good.clone_from(&u);
        }
        if !update_norm.is_finite() || streak >= cfg.divergence_window {
            if auto && halvings < cfg.max_halvings {
                rho *= 0.5;
                halvings += 1;
                streak = 0;
                prev_update = None;
                u.clone_from(&last_good);
                log::debug!("update norm grew; halving rho to {rho:.3e}");
                continue;
            }
            let report = SolveReport {
                solution: u,
                iterations,
                final_residual,
                final_update_norm: final_update,
                contraction_estimates: ratios,
                converged: false,
            };
            return Err(SolverError::DidNotConverge {
                halvings,
                report: Box::new(report),
            });
        }

        for idx in grid.interior_indices() {
            let k = u.flat_of(&idx);
            let r = residual.value_flat(k).expect("interior residual set");
            let v = u.value_flat(k).expect("interior value set");
            u.set_flat(k, v - rho * r);
        }
        iterations += 1;
        final_update = update_norm;
        prev_update = Some(update_norm);
        if update_norm <= cfg.tol_update {
            // Re-evaluate the residual so the report reflects the final state.
            final_residual = scheme::residual_into(&mut u, params, op, g, &mut residual)?;
            converged = final_residual <= cfg.tol_residual;
            break;
        }
    }

    Ok(SolveReport {
        solution: u,
        iterations,
        final_residual,
        final_update_norm: final_update,
        contraction_estimates: ratios,
        converged,
    })
}

/// Stencil offsets the stabilized operator reads, as per-axis deltas.
fn stencil_offsets(dim: usize) -> Vec<Vec<i64>> {
    let mut offsets = vec![vec![0; dim]];
    for i in 0..dim {
        for d in [-2i64, -1, 1, 2] {
            let mut o = vec![0; dim];
            o[i] = d;
            offsets.push(o);
        }
    }
    for i in 0..dim {
        for j in (i + 1)..dim {
            for (di, dj) in [(1i64, 1i64), (1, -1), (-1, 1), (-1, -1)] {
                let mut o = vec![0; dim];
                o[i] = di;
                o[j] = dj;
                offsets.push(o);
            }
        }
    }
    offsets
}

/// Color of an interior node for Jacobian probing: residues mod 5 per axis,
/// so no stencil sees two probed nodes at once.
fn node_color(idx: &MultiIndex) -> usize {
    let mut c = 0usize;
    let mut stride = 1usize;
    for axis in 0..idx.dim() {
        c += (idx.component(axis).rem_euclid(5)) as usize * stride;
        stride *= 5;
    }
    c
}

/// Bandwidth of the interior-ordered Jacobian: the widest stencil offset is
/// two steps along the slowest axis.
fn jacobian_bandwidth(grid: &GridSpec) -> usize {
    let mut stride = 1usize;
    let mut band = 0usize;
    for axis in 0..grid.dim() {
        let m = grid.size(axis) - 2;
        band = band.max(2 * stride);
        if axis + 1 < grid.dim() {
            // contribution of +/-1 diagonal offsets across axis pairs
            band = band.max(stride * m + stride);
        }
        stride *= m;
    }
    band
}

struct NewtonWorkspace {
    base_residual: GridFunction,
    probe_state: GridFunction,
    probe_residual: GridFunction,
}

#[allow(clippy::too_many_arguments)]
fn assemble_jacobian(
    grid: &GridSpec,
    u: &GridFunction,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    g: &dyn Fn(&[f64]) -> f64,
    offsets: &[Vec<i64>],
    ws: &mut NewtonWorkspace,
    jac: &mut BandedMatrix,
) -> Result<(), SolverError> {
    jac.clear();
    let n_colors = 5usize.pow(grid.dim() as u32);
    let scale = 1.0 + u.max_abs_on_mesh();
    let eps = f64::EPSILON.sqrt() * scale;

    // Interior nodes grouped by color, with flat offsets precomputed.
    let interior: Vec<MultiIndex> = grid.interior_indices().collect();
    for color in 0..n_colors {
        let members: Vec<&MultiIndex> = interior
            .iter()
            .filter(|idx| node_color(idx) == color)
            .collect();
        if members.is_empty() {
            continue;
        }
        ws.probe_state.clone_from(u);
        for idx in &members {
            let k = ws.probe_state.flat_of(idx);
            let v = ws.probe_state.value_flat(k).expect("interior set");
            ws.probe_state.set_flat(k, v + eps);
        }
        scheme::residual_into(
            &mut ws.probe_state,
            params,
            op,
            g,
            &mut ws.probe_residual,
        )?;
        for gamma_idx in &members {
            let col = grid.interior_flat(gamma_idx).expect("interior");
            for offset in offsets {
                let beta_idx = gamma_idx.offset_all(offset);
                let Some(row) = grid.interior_flat(&beta_idx) else {
                    continue;
                };
                let kb = ws.probe_residual.flat_of(&beta_idx);
                let r1 = ws.probe_residual.value_flat(kb).expect("residual set");
                let r0 = ws.base_residual.value_flat(kb).expect("residual set");
                jac.set(row, col, (r1 - r0) / eps);
            }
        }
    }
    Ok(())
}

/// Damped Newton iteration on the interior residual. The Jacobian is
/// probed by finite differences over the stencil offsets (one residual
/// sweep per color class) and factored as a banded matrix. Falls back to the
/// pseudo-time iteration on Jacobian or line-search failure when configured.
pub fn solve_newton(
    u0: &GridFunction,
    cfg: &SolverConfig,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    let grid = u0.grid().clone();
    let n = grid.interior_count();
    if n == 0 {
        // Nothing to solve: the boundary data is the whole answer.
        let mut u = u0.clone();
        let mut residual = GridFunction::unset(grid.clone());
        scheme::residual_into(&mut u, params, op, g, &mut residual)?;
        return Ok(SolveReport {
            solution: u,
            iterations: 0,
            final_residual: 0.0,
            final_update_norm: 0.0,
            contraction_estimates: Vec::new(),
            converged: true,
        });
    }

    let offsets = stencil_offsets(grid.dim());
    let band = jacobian_bandwidth(&grid);
    let mut jac = BandedMatrix::new(n, band, band);
    let mut ws = NewtonWorkspace {
        base_residual: GridFunction::unset(grid.clone()),
        probe_state: u0.clone(),
        probe_residual: GridFunction::unset(grid.clone()),
    };

    const MAX_KINK_ESCAPES: usize = 5;
    let mut u = u0.clone();
    let mut trial = u.clone();
    let mut trial_residual = GridFunction::unset(grid.clone());
    let mut rhs = vec![0.0; n];
    let mut ratios = Vec::new();
    let mut prev_update: Option<f64> = None;
    let mut final_update = f64::INFINITY;
    let mut iterations = 0usize;
    let mut kink_escapes = 0usize;

    let interior: Vec<MultiIndex> = grid.interior_indices().collect();
    loop {
        let max_abs = scheme::residual_into(&mut u, params, op, g, &mut ws.base_residual)?;
        if max_abs <= cfg.tol_residual {
            return Ok(SolveReport {
                solution: u,
                iterations,
                final_residual: max_abs,
                final_update_norm: final_update,
                contraction_estimates: ratios,
                converged: true,
            });
        }
        if iterations >= cfg.max_iters {
            return Ok(SolveReport {
                solution: u,
                iterations,
                final_residual: max_abs,
                final_update_norm: final_update,
                contraction_estimates: ratios,
                converged: false,
            });
        }

        assemble_jacobian(&grid, &u, params, op, g, &offsets, &mut ws, &mut jac)?;
        let factor = match jac.factor() {
            Ok(f) => f,
            Err(err) => {
                if cfg.method == SolveMethod::NewtonWithEulerFallback {
                    log::warn!("Jacobian factorization failed ({err}); falling back to pseudo-time iteration");
                    let mut euler_cfg = cfg.clone();
                    euler_cfg.method = SolveMethod::Euler;
                    euler_cfg.rho = PseudoTimeStep::Auto;
                    return solve_fixed_point(&u, &euler_cfg, params, op, g);
                }
                return Err(err);
            }
        };
        for idx in &interior {
            let row = grid.interior_flat(idx).expect("interior");
            let k = ws.base_residual.flat_of(idx);
            rhs[row] = -ws.base_residual.value_flat(k).expect("residual set");
        }
        factor.solve_in_place(&mut rhs);

        // Backtracking on the Euclidean residual norm. Where the control
        // argmin is tied the probed Jacobian mixes branch slopes and no
        // damped step descends; a bounded number of full steps is accepted
        // anyway, which moves the iterate onto a single branch.
        let base_l2 = interior_l2(&grid, &ws.base_residual);
        let mut step = cfg.damping;
        let mut accepted = false;
        let mut full_step_finite = false;
        for halving in 0..30 {
            trial.clone_from(&u);
            for idx in &interior {
                let row = grid.interior_flat(idx).expect("interior");
                let k = trial.flat_of(idx);
                let v = trial.value_flat(k).expect("interior set");
                trial.set_flat(k, v + step * rhs[row]);
            }
            if let Ok(trial_max) =
                scheme::residual_into(&mut trial, params, op, g, &mut trial_residual)
            {
                if halving == 0 {
                    full_step_finite = trial_max.is_finite();
                }
                let trial_l2 = interior_l2(&grid, &trial_residual);
                if trial_l2 < base_l2 {
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if accepted {
            kink_escapes = 0;
        } else if full_step_finite && kink_escapes < MAX_KINK_ESCAPES {
            kink_escapes += 1;
            step = cfg.damping;
            trial.clone_from(&u);
            for idx in &interior {
                let row = grid.interior_flat(idx).expect("interior");
                let k = trial.flat_of(idx);
                let v = trial.value_flat(k).expect("interior set");
                trial.set_flat(k, v + step * rhs[row]);
            }
            log::debug!("no descending step; accepting a full step across the kink");
        } else {
            if cfg.method == SolveMethod::NewtonWithEulerFallback {
                log::warn!("line search stalled; falling back to pseudo-time iteration");
                let mut euler_cfg = cfg.clone();
                euler_cfg.method = SolveMethod::Euler;
                euler_cfg.rho = PseudoTimeStep::Auto;
                return solve_fixed_point(&u, &euler_cfg, params, op, g);
            }
            return Err(SolverError::LineSearchFailed);
        }
        u.clone_from(&trial);
        iterations += 1;

        let update_norm = step * rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if let Some(p) = prev_update {
            if p > 0.0 {
                ratios.push(update_norm / p);
            }
        }
        prev_update = Some(update_norm);
        final_update = update_norm;
        if update_norm <= cfg.tol_update {
            let max_abs = scheme::residual_into(&mut u, params, op, g, &mut ws.base_residual)?;
            return Ok(SolveReport {
                solution: u,
                iterations,
                final_residual: max_abs,
                final_update_norm: update_norm,
                contraction_estimates: ratios,
                converged: max_abs <= cfg.tol_residual,
            });
        }
    }
}

/// Dispatches on the configured method.
pub fn solve(
    u0: &GridFunction,
    cfg: &SolverConfig,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<SolveReport, SolverError> {
    match cfg.method {
        SolveMethod::Euler => solve_fixed_point(u0, cfg, params, op, g),
        SolveMethod::Newton | SolveMethod::NewtonWithEulerFallback => {
            solve_newton(u0, cfg, params, op, g)
        }
    }
}

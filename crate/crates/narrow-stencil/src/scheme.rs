//! The stabilized numerical operator: the base PDE operator evaluated on the
//! averaged Hessian and central gradient, plus the numerical moment
//! `gamma 1 : (tilde - hat)` and minus the numerical viscosity
//! `beta sum_i h_i delta_i^2`, with ghost values closed by the auxiliary
//! discrete Laplace equation on the boundary.

use thiserror::Error;

use crate::grid::{GridError, GridFunction, MultiIndex, NodeClass};
use crate::linalg::{DimVec, SquareMat};
use crate::problems::{EllipticityData, PdeOperator};
use crate::stencil::{self, StencilError, Width};

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
    #[error("stabilization coefficients must be nonnegative (gamma={gamma}, beta={beta})")]
    NegativeCoefficient { gamma: f64, beta: f64 },
    #[error("node {0:?} is not interior")]
    NotInterior(Vec<i64>),
    #[error("auxiliary stencil leaves the mesh at boundary node {0:?}")]
    BoundaryTopology(Vec<i64>),
    #[error("slot axis {axis} out of range for dimension {dim}")]
    InvalidSlot { axis: usize, dim: usize },
}

/// Stabilization coefficients: moment matrix `gamma * ones(d, d)` and
/// viscosity vector `beta * ones(d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub gamma: f64,
    pub beta: f64,
}

impl SchemeParams {
    pub fn new(gamma: f64, beta: f64) -> Result<Self, SchemeError> {
        if gamma < 0.0 || beta < 0.0 {
            return Err(SchemeError::NegativeCoefficient { gamma, beta });
        }
        Ok(Self { gamma, beta })
    }

    /// The smallest coefficients that guarantee the sign structure of the
    /// numerical operator for the given bounds.
    pub fn monotone_thresholds(ell: &EllipticityData) -> (f64, f64) {
        (0.5 * ell.hessian_upper, 0.5 * ell.grad_upper)
    }

    /// Like [`SchemeParams::new`], but warns when the coefficients are below
    /// the monotonicity thresholds of the operator.
    pub fn checked(gamma: f64, beta: f64, ell: &EllipticityData) -> Result<Self, SchemeError> {
        let params = Self::new(gamma, beta)?;
        let (gamma_min, beta_min) = Self::monotone_thresholds(ell);
        if gamma < gamma_min {
            log::warn!(
                "gamma = {gamma} is below the monotonicity threshold {gamma_min}; \
                 the scheme may lose its sign structure"
            );
        }
        if beta < beta_min {
            log::warn!(
                "beta = {beta} is below the monotonicity threshold {beta_min}; \
                 the scheme may lose its sign structure"
            );
        }
        Ok(params)
    }
}

/// Residual of the scheme, defined exactly on interior nodes.
#[derive(Debug, Clone)]
pub struct Residual {
    pub values: GridFunction,
    pub max_abs: f64,
}

/// Fills every valid ghost slot by solving the auxiliary equation
/// `sum_i delta_i^2 U = 0` at its adjacent boundary node for the single
/// unknown. Interior and boundary values must be set; excluded ghosts stay
/// unset.
pub fn ghost_fill(u: &mut GridFunction) -> Result<(), SchemeError> {
    let grid = u.grid().clone();
    let d = grid.dim();
    for alpha in grid.boundary_aux_indices() {
        // The auxiliary node sits on exactly one face; find its axis.
        let mut face_axis = None;
        for axis in 0..d {
            let c = alpha.component(axis);
            if c == 1 || c == grid.size(axis) as i64 {
                face_axis = Some(axis);
                break;
            }
        }
        let axis =
            face_axis.ok_or_else(|| SchemeError::BoundaryTopology(alpha.components().to_vec()))?;
        let inward: i64 = if alpha.component(axis) == 1 { 1 } else { -1 };

        let h_axis = grid.spacing(axis);
        let u_b = u.value(&alpha)?;
        let u_inner = u
            .value(&alpha.offset(axis, inward))
            .map_err(|_| SchemeError::BoundaryTopology(alpha.components().to_vec()))?;
        let mut tangential = 0.0;
        for j in 0..d {
            if j == axis {
                continue;
            }
            tangential += stencil::second_diff(u, &alpha, j, Width::H)
                .map_err(|_| SchemeError::BoundaryTopology(alpha.components().to_vec()))?;
        }
        let ghost_value = -u_inner + 2.0 * u_b - h_axis * h_axis * tangential;
        let ghost = alpha.offset(axis, -inward);
        u.set_value(&ghost, ghost_value)?;
    }
    Ok(())
}

/// Evaluates the stabilized operator at an interior node from grid data
/// (ghosts must be filled).
pub fn hat_f_at(
    u: &GridFunction,
    idx: &MultiIndex,
    params: &SchemeParams,
    op: &dyn PdeOperator,
) -> Result<f64, SchemeError> {
    let grid = u.grid();
    if grid.classify(idx)? != NodeClass::Interior {
        return Err(SchemeError::NotInterior(idx.components().to_vec()));
    }
    let hess = stencil::hessians(u, idx)?;
    let grads = stencil::gradients(u, idx)?;
    let u_val = u.value(idx)?;
    let x = grid.node_coord(idx)?;

    let base = op.evaluate(&hess.bar, &grads.central, u_val, &x);
    let moment = params.gamma * hess.tilde.sub(&hess.hat).entry_sum();
    // The sided-gradient difference equals h_i times the three-point second
    // difference, which is already the hat diagonal.
    let viscosity: f64 = (0..grid.dim())
        .map(|i| grid.spacing(i) * hess.hat.get(i, i))
        .sum();
    Ok(base + moment - params.beta * viscosity)
}

/// The independent argument slots of the numerical operator. The averaged
/// Hessian and central gradient are derived from these, never passed
/// directly.
#[derive(Debug, Clone)]
pub struct SlotState {
    pub hat: SquareMat,
    pub tilde: SquareMat,
    pub grad_plus: DimVec,
    pub grad_minus: DimVec,
    pub u: f64,
}

/// Reads the independent slots of the operator at an interior node.
pub fn slot_state(u: &GridFunction, idx: &MultiIndex) -> Result<SlotState, SchemeError> {
    let hess = stencil::hessians(u, idx)?;
    let grads = stencil::gradients(u, idx)?;
    Ok(SlotState {
        hat: hess.hat,
        tilde: hess.tilde,
        grad_plus: grads.forward,
        grad_minus: grads.backward,
        u: u.value(idx)?,
    })
}

/// Evaluates the operator from explicit slot values: used by the
/// monotonicity probes and the consistency checks.
pub fn hat_f_slots(
    slots: &SlotState,
    x: &[f64],
    params: &SchemeParams,
    op: &dyn PdeOperator,
) -> f64 {
    let bar = slots.hat.average(&slots.tilde);
    let central: DimVec = slots
        .grad_plus
        .iter()
        .zip(slots.grad_minus.iter())
        .map(|(f, b)| 0.5 * (f + b))
        .collect();
    let base = op.evaluate(&bar, &central, slots.u, x);
    let moment = params.gamma * slots.tilde.sub(&slots.hat).entry_sum();
    let viscosity: f64 = slots
        .grad_plus
        .iter()
        .zip(slots.grad_minus.iter())
        .map(|(f, b)| f - b)
        .sum();
    base + moment - params.beta * viscosity
}

/// Overwrites boundary values with `g`, closes the ghosts, and evaluates the
/// stabilized operator at every interior node.
pub fn assemble_residual(
    u: &mut GridFunction,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    g: &dyn Fn(&[f64]) -> f64,
) -> Result<Residual, SchemeError> {
    let mut values = GridFunction::unset(u.grid().clone());
    let max_abs = residual_into(u, params, op, g, &mut values)?;
    Ok(Residual { values, max_abs })
}

/// Allocation-free residual assembly into an existing grid function; returns
/// the interior max-norm.
pub(crate) fn residual_into(
    u: &mut GridFunction,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    g: &dyn Fn(&[f64]) -> f64,
    out: &mut GridFunction,
) -> Result<f64, SchemeError> {
    let grid = u.grid().clone();
    let mut x = vec![0.0; grid.dim()];
    for beta in grid.boundary_indices() {
        grid.coord_into(&beta, &mut x);
        let k = u.flat_of(&beta);
        u.set_flat(k, g(&x));
    }
    ghost_fill(u)?;
    let mut max_abs = 0.0f64;
    for alpha in grid.interior_indices() {
        let r = hat_f_at(u, &alpha, params, op)?;
        if !r.is_finite() {
            return Err(SchemeError::Grid(GridError::UnsetValue(
                alpha.components().to_vec(),
            )));
        }
        let k = out.flat_of(&alpha);
        out.set_flat(k, r);
        max_abs = max_abs.max(r.abs());
    }
    Ok(max_abs)
}

/// Which independent slot a monotonicity probe perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Hat(usize, usize),
    Tilde(usize, usize),
    GradPlus(usize),
    GradMinus(usize),
    Value,
}

/// Finite difference of the slot-form operator under a `+epsilon`
/// perturbation of one independent slot, holding the others fixed. With
/// coefficients at or above the monotone thresholds the sign is nonpositive
/// for `Hat`/`GradPlus` slots and nonnegative for `Tilde`/`GradMinus`/`Value`.
pub fn monotonicity_probe(
    u: &GridFunction,
    idx: &MultiIndex,
    params: &SchemeParams,
    op: &dyn PdeOperator,
    slot: Slot,
    epsilon: f64,
) -> Result<f64, SchemeError> {
    let d = u.grid().dim();
    let check_axis = |axis: usize| {
        if axis >= d {
            Err(SchemeError::InvalidSlot { axis, dim: d })
        } else {
            Ok(())
        }
    };
    let base = slot_state(u, idx)?;
    let x = u.grid().node_coord(idx)?;
    let mut perturbed = base.clone();
    match slot {
        Slot::Hat(i, j) => {
            check_axis(i)?;
            check_axis(j)?;
            perturbed.hat.add_to(i, j, epsilon);
        }
        Slot::Tilde(i, j) => {
            check_axis(i)?;
            check_axis(j)?;
            perturbed.tilde.add_to(i, j, epsilon);
        }
        Slot::GradPlus(i) => {
            check_axis(i)?;
            perturbed.grad_plus[i] += epsilon;
        }
        Slot::GradMinus(i) => {
            check_axis(i)?;
            perturbed.grad_minus[i] += epsilon;
        }
        Slot::Value => perturbed.u += epsilon,
    }
    Ok(hat_f_slots(&perturbed, &x, params, op) - hat_f_slots(&base, &x, params, op))
}

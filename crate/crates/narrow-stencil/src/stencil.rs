//! First and second order difference operators on grid functions.
//!
//! All operators are pointwise, pure, and fully anisotropic (`h_i != h_j`
//! supported throughout). Mixed second differences are evaluated by their
//! explicit single-expression formulas rather than by composing sided
//! differences; the composition serves as the independent oracle in tests.

use thiserror::Error;

use crate::grid::{GridError, GridFunction, MultiIndex};
use crate::linalg::{DimVec, SquareMat};

#[derive(Debug, Error)]
pub enum StencilError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("axes must differ for mixed operators (both {0})")]
    SameAxis(usize),
}

/// Side selector for the sided first differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Spacing selector for the centered second difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Width {
    H,
    TwoH,
}

/// Which averaged mixed second difference to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixedFlavor {
    Hat,
    Tilde,
    Bar,
}

/// Diagonal direction for the rotated three-point second differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagDirection {
    /// `(-e_i + e_j)` diagonal.
    Xi,
    /// `(+e_i + e_j)` diagonal.
    Eta,
}

/// The three discrete gradients at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGradients {
    pub forward: DimVec,
    pub backward: DimVec,
    pub central: DimVec,
}

/// The four discrete Hessians at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHessians {
    pub hat: SquareMat,
    pub tilde: SquareMat,
    pub bar: SquareMat,
    /// Standard central Hessian: `hat` on the diagonal, `bar` off it.
    pub std: SquareMat,
}

#[inline]
fn val(u: &GridFunction, idx: &MultiIndex) -> Result<f64, StencilError> {
    Ok(u.value(idx)?)
}

/// Forward or backward first difference along `axis`.
pub fn diff_sided(
    u: &GridFunction,
    idx: &MultiIndex,
    axis: usize,
    side: Side,
) -> Result<f64, StencilError> {
    let h = u.grid().spacing(axis);
    let center = val(u, idx)?;
    match side {
        Side::Plus => Ok((val(u, &idx.offset(axis, 1))? - center) / h),
        Side::Minus => Ok((center - val(u, &idx.offset(axis, -1))?) / h),
    }
}

/// Central first difference, the mean of the sided pair.
pub fn central_diff(u: &GridFunction, idx: &MultiIndex, axis: usize) -> Result<f64, StencilError> {
    let f = diff_sided(u, idx, axis, Side::Plus)?;
    let b = diff_sided(u, idx, axis, Side::Minus)?;
    Ok(0.5 * (f + b))
}

/// Three-point centered second difference at spacing `h_i` or `2 h_i`.
pub fn second_diff(
    u: &GridFunction,
    idx: &MultiIndex,
    axis: usize,
    width: Width,
) -> Result<f64, StencilError> {
    let (step, s) = match width {
        Width::H => (1i64, u.grid().spacing(axis)),
        Width::TwoH => (2i64, 2.0 * u.grid().spacing(axis)),
    };
    let lo = val(u, &idx.offset(axis, -step))?;
    let mid = val(u, idx)?;
    let hi = val(u, &idx.offset(axis, step))?;
    Ok((lo - 2.0 * mid + hi) / (s * s))
}

fn diag_value(
    u: &GridFunction,
    idx: &MultiIndex,
    i: usize,
    j: usize,
    di: i64,
    dj: i64,
) -> Result<f64, StencilError> {
    val(u, &idx.offset(i, di).offset(j, dj))
}

/// Averaged mixed second difference (`hat`, `tilde`, or `bar` flavor) for
/// distinct axes `i != j`, by the explicit 6- and 4-point formulas.
pub fn mixed_second(
    u: &GridFunction,
    idx: &MultiIndex,
    i: usize,
    j: usize,
    flavor: MixedFlavor,
) -> Result<f64, StencilError> {
    if i == j {
        return Err(StencilError::SameAxis(i));
    }
    let hi = u.grid().spacing(i);
    let hj = u.grid().spacing(j);
    let c = val(u, idx)?;
    match flavor {
        MixedFlavor::Hat => {
            let pi_mj = diag_value(u, idx, i, j, 1, -1)?;
            let pi = val(u, &idx.offset(i, 1))?;
            let mj = val(u, &idx.offset(j, -1))?;
            let mi_pj = diag_value(u, idx, i, j, -1, 1)?;
            let mi = val(u, &idx.offset(i, -1))?;
            let pj = val(u, &idx.offset(j, 1))?;
            Ok(-(pi_mj - pi - (mj - c)) / (2.0 * hi * hj)
                - (mi_pj - mi - (pj - c)) / (2.0 * hi * hj))
        }
        MixedFlavor::Tilde => {
            let pi_pj = diag_value(u, idx, i, j, 1, 1)?;
            let pi = val(u, &idx.offset(i, 1))?;
            let pj = val(u, &idx.offset(j, 1))?;
            let mi_mj = diag_value(u, idx, i, j, -1, -1)?;
            let mi = val(u, &idx.offset(i, -1))?;
            let mj = val(u, &idx.offset(j, -1))?;
            Ok((pi_pj - pi - (pj - c)) / (2.0 * hi * hj)
                + (mi_mj - mi - (mj - c)) / (2.0 * hi * hj))
        }
        MixedFlavor::Bar => {
            let pp = diag_value(u, idx, i, j, 1, 1)?;
            let mm = diag_value(u, idx, i, j, -1, -1)?;
            let mp = diag_value(u, idx, i, j, -1, 1)?;
            let pm = diag_value(u, idx, i, j, 1, -1)?;
            Ok((pp + mm) / (4.0 * hi * hj) - (mp + pm) / (4.0 * hi * hj))
        }
    }
}

/// Three-point second difference along a grid diagonal, normalized by
/// `h_i^2 + h_j^2`.
pub fn diag_second(
    u: &GridFunction,
    idx: &MultiIndex,
    i: usize,
    j: usize,
    dir: DiagDirection,
) -> Result<f64, StencilError> {
    if i == j {
        return Err(StencilError::SameAxis(i));
    }
    let hi = u.grid().spacing(i);
    let hj = u.grid().spacing(j);
    let c = val(u, idx)?;
    let (a, b) = match dir {
        DiagDirection::Xi => (
            diag_value(u, idx, i, j, -1, 1)?,
            diag_value(u, idx, i, j, 1, -1)?,
        ),
        DiagDirection::Eta => (
            diag_value(u, idx, i, j, 1, 1)?,
            diag_value(u, idx, i, j, -1, -1)?,
        ),
    };
    Ok((a - 2.0 * c + b) / (hi * hi + hj * hj))
}

/// Assembles the sided and central gradients at a node.
pub fn gradients(u: &GridFunction, idx: &MultiIndex) -> Result<DiscreteGradients, StencilError> {
    let d = u.grid().dim();
    let mut forward = DimVec::with_capacity(d);
    let mut backward = DimVec::with_capacity(d);
    let mut central = DimVec::with_capacity(d);
    for axis in 0..d {
        let f = diff_sided(u, idx, axis, Side::Plus)?;
        let b = diff_sided(u, idx, axis, Side::Minus)?;
        forward.push(f);
        backward.push(b);
        central.push(0.5 * (f + b));
    }
    Ok(DiscreteGradients {
        forward,
        backward,
        central,
    })
}

/// Five-point second difference: the diagonal entry of the `tilde` Hessian.
fn tilde_diag(u: &GridFunction, idx: &MultiIndex, axis: usize) -> Result<f64, StencilError> {
    let h = u.grid().spacing(axis);
    let m2 = val(u, &idx.offset(axis, -2))?;
    let m1 = val(u, &idx.offset(axis, -1))?;
    let c = val(u, idx)?;
    let p1 = val(u, &idx.offset(axis, 1))?;
    let p2 = val(u, &idx.offset(axis, 2))?;
    Ok((m2 - 2.0 * m1 + 2.0 * c - 2.0 * p1 + p2) / (2.0 * h * h))
}

/// Assembles the four discrete Hessians at a node.
///
/// Off-diagonal entries are computed once per unordered pair and mirrored,
/// so all flavors are exactly symmetric.
pub fn hessians(u: &GridFunction, idx: &MultiIndex) -> Result<DiscreteHessians, StencilError> {
    let d = u.grid().dim();
    let mut hat = SquareMat::zeros(d);
    let mut tilde = SquareMat::zeros(d);
    let mut bar = SquareMat::zeros(d);
    for i in 0..d {
        hat.set(i, i, second_diff(u, idx, i, Width::H)?);
        tilde.set(i, i, tilde_diag(u, idx, i)?);
        bar.set(i, i, second_diff(u, idx, i, Width::TwoH)?);
        for j in (i + 1)..d {
            let h_ij = mixed_second(u, idx, i, j, MixedFlavor::Hat)?;
            let t_ij = mixed_second(u, idx, i, j, MixedFlavor::Tilde)?;
            let b_ij = mixed_second(u, idx, i, j, MixedFlavor::Bar)?;
            hat.set(i, j, h_ij);
            hat.set(j, i, h_ij);
            tilde.set(i, j, t_ij);
            tilde.set(j, i, t_ij);
            bar.set(i, j, b_ij);
            bar.set(j, i, b_ij);
        }
    }
    let mut std = bar.clone();
    for i in 0..d {
        std.set(i, i, hat.get(i, i));
    }
    Ok(DiscreteHessians {
        hat,
        tilde,
        bar,
        std,
    })
}

/// The numerical-moment factor `tilde - hat`, entrywise.
pub fn moment_difference(u: &GridFunction, idx: &MultiIndex) -> Result<SquareMat, StencilError> {
    let h = hessians(u, idx)?;
    Ok(h.tilde.sub(&h.hat))
}

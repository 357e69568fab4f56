//! Narrow-stencil finite difference method for fully nonlinear second order
//! elliptic Dirichlet problems, notably Hamilton-Jacobi-Bellman equations.
//!
//! The discretization wraps the nonlinear operator in two stabilizing terms:
//! a *numerical moment* built from the difference of two centered Hessian
//! approximations, and a Lax-Friedrichs style *numerical viscosity* built
//! from the difference of the sided gradients. Ghost values one layer
//! outside the domain are closed by an auxiliary discrete Laplace equation
//! on the boundary.
//!
//! Crate layout:
//! - [`grid`]: tensor-product meshes on d-rectangles with ghost extension.
//! - [`stencil`]: first and second order difference operators.
//! - [`problems`]: HJB operators and the manufactured benchmark problems.
//! - [`scheme`]: the stabilized numerical operator and residual assembly.
//! - [`solver`]: pseudo-time fixed-point iteration and damped Newton.
//! - [`spectral`]: matrix representations and SPD property checks.
//! - [`convergence`]: refinement studies, norms, and table emission.

pub mod convergence;
pub mod grid;
pub mod linalg;
pub mod problems;
pub mod scheme;
pub mod solver;
pub mod spectral;
pub mod stencil;

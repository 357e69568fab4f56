//! Dense matrix representations of the difference operators on small grids,
//! SPD checks, and randomized verification of the supporting linear algebra
//! lemmas. Strictly a verification harness: nothing here sits on the solve
//! path.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::grid::{GridFunction, GridSpec, MultiIndex};
use crate::scheme::{self, SchemeError};
use crate::stencil::{self, MixedFlavor, StencilError, Width};

/// Dense eigendecompositions only; interior sizes beyond this are rejected.
pub const MAX_INTERIOR: usize = 400;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("grid has {interior} interior nodes; dense analysis is capped at {cap}")]
    GridTooLarge { interior: usize, cap: usize },
    #[error("label axes invalid: {0}")]
    InvalidLabel(String),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Stencil(#[from] StencilError),
}

/// Which interior-to-interior operator to materialize. All labels fold in
/// homogeneous Dirichlet data; `SecondDiff2h` and `Moment` additionally fold
/// in the auxiliary ghost closure (which reduces to `ghost = -inner` under
/// zero boundary values).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorLabel {
    /// `-delta^2_{x_i, 2h_i}` with the ghost closure.
    SecondDiff2h(usize),
    /// The moment component `[tilde - hat]_{ij}` (diagonal or mixed).
    Moment(usize, usize),
    /// `[tilde D^2]_{ij}` for `i != j`.
    TildeOffDiag(usize, usize),
    /// `-[hat D^2]_{ij}` for `i != j`.
    HatOffDiagNeg(usize, usize),
    /// `-delta^2_{x_i, h_i}` with plain homogeneous Dirichlet data.
    SecondDiffDirichlet(usize),
}

impl OperatorLabel {
    fn validate(&self, dim: usize) -> Result<(), SpectralError> {
        let check = |axis: usize| {
            if axis >= dim {
                Err(SpectralError::InvalidLabel(format!(
                    "axis {axis} out of range for dimension {dim}"
                )))
            } else {
                Ok(())
            }
        };
        match *self {
            OperatorLabel::SecondDiff2h(i) | OperatorLabel::SecondDiffDirichlet(i) => check(i),
            OperatorLabel::Moment(i, j) => check(i).and(check(j)),
            OperatorLabel::TildeOffDiag(i, j) | OperatorLabel::HatOffDiagNeg(i, j) => {
                check(i)?;
                check(j)?;
                if i == j {
                    return Err(SpectralError::InvalidLabel(
                        "off-diagonal labels need distinct axes".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn apply(&self, u: &GridFunction, idx: &MultiIndex) -> Result<f64, StencilError> {
        match *self {
            OperatorLabel::SecondDiff2h(i) => Ok(-stencil::second_diff(u, idx, i, Width::TwoH)?),
            OperatorLabel::Moment(i, j) => {
                let m = stencil::moment_difference(u, idx)?;
                Ok(m.get(i, j))
            }
            OperatorLabel::TildeOffDiag(i, j) => {
                stencil::mixed_second(u, idx, i, j, MixedFlavor::Tilde)
            }
            OperatorLabel::HatOffDiagNeg(i, j) => {
                Ok(-stencil::mixed_second(u, idx, i, j, MixedFlavor::Hat)?)
            }
            OperatorLabel::SecondDiffDirichlet(i) => {
                Ok(-stencil::second_diff(u, idx, i, Width::H)?)
            }
        }
    }
}

/// A dense interior-to-interior matrix representation of a labeled operator.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub label: OperatorLabel,
    pub matrix: DMatrix<f64>,
}

/// Materializes the labeled operator by probing interior unit vectors with
/// zero boundary data and the ghost closure, then evaluating the pointwise
/// stencil; column `k` is the image of the `k`-th interior basis vector.
pub fn build_operator_matrix(
    grid: &Arc<GridSpec>,
    label: OperatorLabel,
) -> Result<OperatorMatrix, SpectralError> {
    label.validate(grid.dim())?;
    let n = grid.interior_count();
    if n > MAX_INTERIOR {
        return Err(SpectralError::GridTooLarge {
            interior: n,
            cap: MAX_INTERIOR,
        });
    }
    let interior: Vec<MultiIndex> = grid.interior_indices().collect();
    let mut matrix = DMatrix::zeros(n, n);
    for (col, col_idx) in interior.iter().enumerate() {
        let mut u = GridFunction::zeros_on_mesh(grid.clone());
        u.set_value(col_idx, 1.0).expect("interior write");
        scheme::ghost_fill(&mut u)?;
        for (row, row_idx) in interior.iter().enumerate() {
            matrix[(row, col)] = label.apply(&u, row_idx)?;
        }
    }
    Ok(OperatorMatrix { label, matrix })
}

/// Applies the label pointwise to an interior vector through a grid function
/// with the same closure; the independent route for matrix/stencil
/// equivalence checks.
pub fn apply_pointwise(
    grid: &Arc<GridSpec>,
    label: OperatorLabel,
    interior_values: &[f64],
) -> Result<DVector<f64>, SpectralError> {
    label.validate(grid.dim())?;
    let interior: Vec<MultiIndex> = grid.interior_indices().collect();
    assert_eq!(interior.len(), interior_values.len());
    let mut u = GridFunction::zeros_on_mesh(grid.clone());
    for (idx, v) in interior.iter().zip(interior_values.iter()) {
        u.set_value(idx, *v).expect("interior write");
    }
    scheme::ghost_fill(&mut u)?;
    let mut out = DVector::zeros(interior.len());
    for (row, row_idx) in interior.iter().enumerate() {
        out[row] = label.apply(&u, row_idx)?;
    }
    Ok(out)
}

/// Verdict of an SPD check, with roundoff-scale indefiniteness kept apart
/// from genuine indefiniteness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpdVerdict {
    Definite,
    RoundoffBoundary,
    Indefinite,
}

#[derive(Debug, Clone, Copy)]
pub struct SpdReport {
    pub symmetric: bool,
    pub is_spd: bool,
    pub min_eig: f64,
    pub verdict: SpdVerdict,
}

/// Exact symmetry test plus a dense symmetric eigensolve of the symmetric
/// part; asymmetric inputs are reported, not rejected.
pub fn check_spd(m: &DMatrix<f64>) -> SpdReport {
    let symmetric = m == &m.transpose();
    let sym = (m + m.transpose()).scale(0.5);
    let eigs = sym.symmetric_eigenvalues();
    let min_eig = eigs.min();
    let scale = eigs.amax();
    let verdict = if min_eig > 0.0 {
        SpdVerdict::Definite
    } else if min_eig > -1e-10 * scale.max(1e-300) {
        SpdVerdict::RoundoffBoundary
    } else {
        SpdVerdict::Indefinite
    };
    SpdReport {
        symmetric,
        is_spd: symmetric && min_eig > 0.0,
        min_eig,
        verdict,
    }
}

/// Outcome of one randomized lemma instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaOutcome {
    Holds,
    Fails,
    SkippedPrecondition,
}

fn is_spd_matrix(m: &DMatrix<f64>) -> bool {
    let r = check_spd(m);
    r.symmetric && r.min_eig > 0.0
}

fn is_orthogonal(q: &DMatrix<f64>) -> bool {
    let n = q.nrows();
    let prod = q.transpose() * q;
    (prod - DMatrix::<f64>::identity(n, n)).amax() < 1e-10
}

/// SPD ordering transfer: if `A` is SPD, `Q` orthogonal, `B` symmetric and
/// `A - Q^T B Q` SPD, then `A - B` is SPD.
pub fn lemma_a1(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>) -> LemmaOutcome {
    if !is_spd_matrix(a) || b != &b.transpose() || !is_orthogonal(q) {
        return LemmaOutcome::SkippedPrecondition;
    }
    let shifted = a - q.transpose() * b * q;
    if !is_spd_matrix(&shifted) {
        return LemmaOutcome::SkippedPrecondition;
    }
    let diff = a - b;
    let rep = check_spd(&diff);
    if rep.min_eig > -1e-10 * diff.amax().max(1e-300) {
        LemmaOutcome::Holds
    } else {
        LemmaOutcome::Fails
    }
}

/// Scaled-identity perturbation bound: for SPD `A`, `F` with Cholesky factor
/// `F = R^* R`, `|| sigma I - F A ||_2 <= sigma` whenever
/// `sigma I > R A R^*`.
pub fn lemma_a3(a: &DMatrix<f64>, f: &DMatrix<f64>, sigma: f64) -> LemmaOutcome {
    if !is_spd_matrix(a) || !is_spd_matrix(f) || sigma <= 0.0 {
        return LemmaOutcome::SkippedPrecondition;
    }
    let Some(chol) = f.clone().cholesky() else {
        return LemmaOutcome::SkippedPrecondition;
    };
    // cholesky gives F = L L^T; R = L^T is the upper factor, R A R^* = L^T A L.
    let l = chol.l();
    let rar = l.transpose() * a * &l;
    let lam_max = rar.symmetric_eigenvalues().max();
    if sigma <= lam_max {
        return LemmaOutcome::SkippedPrecondition;
    }
    let n = a.nrows();
    let m = DMatrix::<f64>::identity(n, n).scale(sigma) - f * a;
    let two_norm = m
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);
    if two_norm <= sigma * (1.0 + 1e-10) {
        LemmaOutcome::Holds
    } else {
        LemmaOutcome::Fails
    }
}

/// Small-step contraction with an SPD preconditioner: scans a decreasing
/// geometric sequence of `tau` and reports the largest value for which
/// `||(B - tau F A) x||_2 <= ||B x||_2` held for every sampled unit `x`.
/// The identity preconditioner `F = I` covers the unpreconditioned bound.
pub fn corollary_a1(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    n_tau: usize,
    n_vectors: usize,
    rng: &mut impl Rng,
) -> Option<f64> {
    if !is_spd_matrix(a) || !is_spd_matrix(b) || !is_spd_matrix(f) {
        return None;
    }
    let n = a.nrows();
    let xs: Vec<DVector<f64>> = (0..n_vectors)
        .map(|_| {
            let mut v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0f64..1.0));
            let norm = v.norm();
            if norm > 0.0 {
                v /= norm;
            } else {
                v[0] = 1.0;
            }
            v
        })
        .collect();
    let fa = f * a;
    let mut tau = 1.0f64;
    for _ in 0..n_tau {
        let m = b - fa.scale(tau);
        let holds = xs.iter().all(|x| {
            let lhs = (&m * x).norm();
            let rhs = (b * x).norm();
            lhs <= rhs * (1.0 + 1e-12) + 1e-14
        });
        if holds {
            return Some(tau);
        }
        tau *= 0.5;
    }
    None
}

/// Well-conditioned random SPD matrix `G^T G + 1e-3 I`.
pub fn random_spd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0f64..1.0));
    g.transpose() * &g + DMatrix::<f64>::identity(n, n).scale(1e-3)
}

/// Random orthogonal matrix from the QR factorization of a Gaussian-like
/// sample.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0f64..1.0));
    g.qr().q()
}

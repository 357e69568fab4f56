//! Fully nonlinear operators `F(M, p, u, x)` with ellipticity metadata, the
//! HJB specialization over a control set, and the manufactured benchmark
//! problems used by the convergence studies.

use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::DomainBox;
use crate::linalg::{DimVec, SquareMat};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("control set must be non-empty")]
    EmptyControlSet,
    #[error("control sampling counts must be at least 1 (got n_phi={n_phi}, n_rot={n_rot})")]
    InvalidSampling { n_phi: usize, n_rot: usize },
    #[error("unknown problem name {0:?} (expected test1, test2, or test3)")]
    UnknownProblem(String),
}

/// Lipschitz and ellipticity bounds of an operator `F(M, p, u, x)`.
///
/// `diag_lower` is the smallest lower bound on `-dF/dM_ii` over the axes,
/// `hessian_upper` bounds `|dF/dM_ij|` over all entries including the
/// diagonal, and `grad_upper` bounds `|dF/dp_i|`. `u_lower`/`u_upper` bound
/// `dF/du`. `(lambda, lambda_big)` are uniform ellipticity constants; a zero
/// `lambda` marks a degenerate family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticityData {
    pub u_lower: f64,
    pub u_upper: f64,
    pub diag_lower: f64,
    pub hessian_upper: f64,
    pub grad_upper: f64,
    pub lambda: f64,
    pub lambda_big: f64,
}

impl EllipticityData {
    pub fn validate(&self) -> bool {
        0.0 <= self.u_lower
            && self.u_lower <= self.u_upper
            && self.diag_lower >= 0.0
            && self.hessian_upper >= 0.0
            && self.grad_upper >= 0.0
            && self.lambda >= 0.0
            && (self.lambda == 0.0 || self.lambda <= self.lambda_big)
    }
}

/// An evaluatable operator `F(M, p, u, x)` together with its bounds.
pub trait PdeOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, hessian: &SquareMat, gradient: &[f64], u: f64, x: &[f64]) -> f64;
    fn ellipticity(&self) -> &EllipticityData;
}

/// Matrix coefficient field `A(x)`.
#[derive(Clone)]
pub enum MatrixCoeff {
    Constant(SquareMat),
    Varying(Arc<dyn Fn(&[f64], &mut SquareMat) + Send + Sync>),
}

impl MatrixCoeff {
    pub fn eval_into(&self, x: &[f64], out: &mut SquareMat) {
        match self {
            MatrixCoeff::Constant(m) => out.clone_from(m),
            MatrixCoeff::Varying(f) => f(x, out),
        }
    }
}

/// Vector coefficient field `b(x)`.
#[derive(Clone)]
pub enum VectorCoeff {
    Zero,
    Constant(DimVec),
    Varying(Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>),
}

/// Scalar coefficient field.
#[derive(Clone)]
pub enum ScalarCoeff {
    Constant(f64),
    Varying(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl ScalarCoeff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ScalarCoeff::Constant(c) => *c,
            ScalarCoeff::Varying(f) => f(x),
        }
    }
}

/// One linear operator `L_theta u = A : D^2 u + b . grad u + c u` with its
/// control-dependent running cost `s_theta` (the theta-part of `f_theta`).
#[derive(Clone)]
pub struct Control {
    pub diffusion: MatrixCoeff,
    pub drift: VectorCoeff,
    pub reaction: ScalarCoeff,
    pub cost: ScalarCoeff,
}

/// How the control list was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlSampling {
    Finite,
    /// Uniform lattice over angle and rotation parameters.
    Lattice { n_phi: usize, n_rot: usize },
}

/// A materialized family of controls; the full forcing of control `theta` is
/// `f_theta(x) = cost_theta(x) + shared_cost(x)`.
pub struct ControlSet {
    controls: Vec<Control>,
    sampling: ControlSampling,
    shared_cost: ScalarCoeff,
    dim: usize,
}

impl ControlSet {
    pub fn finite(dim: usize, controls: Vec<Control>) -> Result<Self, ProblemError> {
        if controls.is_empty() {
            return Err(ProblemError::EmptyControlSet);
        }
        Ok(Self {
            controls,
            sampling: ControlSampling::Finite,
            shared_cost: ScalarCoeff::Constant(0.0),
            dim,
        })
    }

    pub fn with_sampling(mut self, sampling: ControlSampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_shared_cost(mut self, shared: ScalarCoeff) -> Self {
        self.shared_cost = shared;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn sampling(&self) -> ControlSampling {
        self.sampling
    }

    pub fn controls(&self) -> &[Control] {
        &self.controls
    }

    pub fn shared_cost(&self) -> &ScalarCoeff {
        &self.shared_cost
    }
}

/// Evaluates `min_theta (A^theta : M + b^theta . p + c^theta u - f_theta)` and
/// the first index attaining the minimum (ties broken by lowest index).
pub fn hjb_eval(
    set: &ControlSet,
    hessian: &SquareMat,
    gradient: &[f64],
    u: f64,
    x: &[f64],
) -> Result<(f64, usize), ProblemError> {
    if set.is_empty() {
        return Err(ProblemError::EmptyControlSet);
    }
    let d = set.dim();
    let mut a = SquareMat::zeros(d);
    let mut b = vec![0.0; d];
    let mut best = f64::INFINITY;
    let mut argmin = 0usize;
    for (k, ctrl) in set.controls.iter().enumerate() {
        ctrl.diffusion.eval_into(x, &mut a);
        let mut v = a.frobenius_dot(hessian);
        match &ctrl.drift {
            VectorCoeff::Zero => {}
            VectorCoeff::Constant(bc) => {
                v += bc
                    .iter()
                    .zip(gradient.iter())
                    .map(|(bi, pi)| bi * pi)
                    .sum::<f64>();
            }
            VectorCoeff::Varying(f) => {
                f(x, &mut b);
                v += b
                    .iter()
                    .zip(gradient.iter())
                    .map(|(bi, pi)| bi * pi)
                    .sum::<f64>();
            }
        }
        v += ctrl.reaction.eval(x) * u;
        v -= ctrl.cost.eval(x);
        if v < best {
            best = v;
            argmin = k;
        }
    }
    Ok((best - set.shared_cost.eval(x), argmin))
}

/// HJB operator `F = min_theta (L_theta u - f_theta)` over a materialized
/// control set.
pub struct HjbOperator {
    controls: Arc<ControlSet>,
    ellipticity: EllipticityData,
}

impl HjbOperator {
    pub fn new(controls: Arc<ControlSet>, ellipticity: EllipticityData) -> Self {
        debug_assert!(ellipticity.validate());
        Self {
            controls,
            ellipticity,
        }
    }

    pub fn control_set(&self) -> &Arc<ControlSet> {
        &self.controls
    }
}

impl PdeOperator for HjbOperator {
    fn dim(&self) -> usize {
        self.controls.dim()
    }

    fn evaluate(&self, hessian: &SquareMat, gradient: &[f64], u: f64, x: &[f64]) -> f64 {
        hjb_eval(&self.controls, hessian, gradient, u, x)
            .expect("control set is non-empty by construction")
            .0
    }

    fn ellipticity(&self) -> &EllipticityData {
        &self.ellipticity
    }
}

/// An analytic solution with its derivatives, for manufactured forcing and
/// error measurement.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub gradient: Arc<dyn Fn(&[f64]) -> DimVec + Send + Sync>,
    pub hessian: Arc<dyn Fn(&[f64]) -> SquareMat + Send + Sync>,
}

/// A benchmark problem: operator, Dirichlet data, and (optionally) the exact
/// solution it was manufactured from.
pub struct ManufacturedProblem {
    pub name: String,
    pub domain: DomainBox,
    pub operator: HjbOperator,
    pub boundary: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    pub exact: Option<ExactSolution>,
}

impl ManufacturedProblem {
    /// Residual of the operator at the exact solution, using analytic
    /// derivatives; zero for a consistent manufactured problem.
    pub fn exact_residual(&self, x: &[f64]) -> Option<f64> {
        let exact = self.exact.as_ref()?;
        let m = (exact.hessian)(x);
        let p = (exact.gradient)(x);
        let u = (exact.value)(x);
        Some(self.operator.evaluate(&m, &p, u, x))
    }
}

/// Builds the theta-independent forcing `g(x) = min_theta (L_theta u_ex(x)
/// - s_theta(x))`; installing it as the shared cost makes the exact solution
/// solve the HJB problem pointwise, whatever the sampling of the controls.
pub fn manufactured_rhs(set: &Arc<ControlSet>, exact: &ExactSolution) -> ScalarCoeff {
    let set = set.clone();
    let value = exact.value.clone();
    let gradient = exact.gradient.clone();
    let hessian = exact.hessian.clone();
    ScalarCoeff::Varying(Arc::new(move |x: &[f64]| {
        let m = hessian(x);
        let p = gradient(x);
        let u = value(x);
        hjb_eval(&set, &m, &p, u, x)
            .expect("manufactured control set is non-empty")
            .0
    }))
}

/// The eight constant diffusion matrices of the finite-control benchmark.
pub fn test1_matrices() -> Vec<SquareMat> {
    vec![
        SquareMat::from_2d(-1.0, 1.0, 1.0, -1.0),
        SquareMat::from_2d(-2.0, 1.0, 1.0, -1.0),
        SquareMat::from_2d(-1.0, -1.0, -1.0, -1.0),
        SquareMat::from_2d(-1.0, -1.0, -1.0, -2.0),
        SquareMat::from_2d(-2.0, 1.0, 1.0, -2.0),
        SquareMat::from_2d(-2.0, -1.0, -1.0, -2.0),
        SquareMat::from_2d(-2.0, -1.0, -1.0, -1.0),
        // The last matrix repeats the fourth; kept verbatim, harmless under min.
        SquareMat::from_2d(-1.0, -1.0, -1.0, -2.0),
    ]
}

fn test1_exact() -> ExactSolution {
    let phase = |x: &[f64]| 2.0 * PI * (1.2 * x[0] - x[1]);
    ExactSolution {
        value: Arc::new(move |x| phase(x).sin()),
        gradient: Arc::new(move |x| {
            let c = phase(x).cos() * 2.0 * PI;
            smallvec::smallvec![1.2 * c, -c]
        }),
        hessian: Arc::new(move |x| {
            let s = -phase(x).sin() * 4.0 * PI * PI;
            SquareMat::from_2d(1.44 * s, -1.2 * s, -1.2 * s, s)
        }),
    }
}

/// Finite control set benchmark on the unit square: eight constant diffusion
/// matrices, no drift or reaction, spatially discontinuous optimal control.
pub fn make_test1() -> ManufacturedProblem {
    let controls: Vec<Control> = test1_matrices()
        .into_iter()
        .map(|a| Control {
            diffusion: MatrixCoeff::Constant(a),
            drift: VectorCoeff::Zero,
            reaction: ScalarCoeff::Constant(0.0),
            cost: ScalarCoeff::Constant(0.0),
        })
        .collect();
    let base = Arc::new(ControlSet::finite(2, controls).expect("non-empty"));
    let exact = test1_exact();
    let g = manufactured_rhs(&base, &exact);
    let set = Arc::new(
        ControlSet::finite(2, base.controls().to_vec())
            .expect("non-empty")
            .with_shared_cost(g),
    );
    // Diagonal derivative bounds come from the matrix diagonals in [-2,-1];
    // the off-diagonal bound is 1, so the overall Hessian-slot bound is 2.
    let ellipticity = EllipticityData {
        u_lower: 0.0,
        u_upper: 0.0,
        diag_lower: 1.0,
        hessian_upper: 2.0,
        grad_upper: 0.0,
        lambda: 0.0,
        lambda_big: 3.0,
    };
    let value = exact.value.clone();
    ManufacturedProblem {
        name: "test1".to_string(),
        domain: DomainBox::unit_square(),
        operator: HjbOperator::new(set, ellipticity),
        boundary: Arc::new(move |x| value(x)),
        exact: Some(exact),
    }
}

fn test2_parts(x: &[f64]) -> (f64, f64, f64, f64, f64) {
    (
        (x[0] * x[1]).exp(),
        (PI * x[0]).sin(),
        (PI * x[0]).cos(),
        (PI * x[1]).sin(),
        (PI * x[1]).cos(),
    )
}

fn test2_exact() -> ExactSolution {
    ExactSolution {
        value: Arc::new(|x| (x[0] * x[1]).exp() * (PI * x[0]).sin() * (PI * x[1]).sin()),
        gradient: Arc::new(|x| {
            let (e, s1, c1, s2, c2) = test2_parts(x);
            smallvec::smallvec![
                e * (x[1] * s1 + PI * c1) * s2,
                e * (x[0] * s2 + PI * c2) * s1
            ]
        }),
        hessian: Arc::new(|x| {
            let (e, s1, c1, s2, c2) = test2_parts(x);
            let uxx = e * (x[1] * x[1] * s1 + 2.0 * PI * x[1] * c1 - PI * PI * s1) * s2;
            let uyy = e * (x[0] * x[0] * s2 + 2.0 * PI * x[0] * c2 - PI * PI * s2) * s1;
            let uxy = e
                * ((x[0] * x[1] + 1.0) * s1 * s2
                    + PI * x[0] * c1 * s2
                    + PI * x[1] * s1 * c2
                    + PI * PI * c1 * c2);
            SquareMat::from_2d(uxx, uxy, uxy, uyy)
        }),
    }
}

/// The diffusion matrix of one sampled control of the rotating-diffusion
/// benchmark: `-1/2 sigma sigma^T` with `sigma = R^T [[1, sin phi], [0, cos
/// phi]]`. The sign makes the family uniformly negative definite, which is
/// what the min-form of the operator requires.
pub fn test2_diffusion(phi: f64, omega: f64) -> SquareMat {
    let (s, c) = (phi.sin(), phi.cos());
    // sigma sigma^T = R^T [[1 + s^2, s c], [s c, c^2]] R.
    let m11 = 1.0 + s * s;
    let m12 = s * c;
    let m22 = c * c;
    let (cw, sw) = (omega.cos(), omega.sin());
    // R = [[cw, -sw], [sw, cw]], A0 = R^T M R.
    let a11 = cw * (m11 * cw + m12 * sw) + sw * (m12 * cw + m22 * sw);
    let a12 = cw * (-m11 * sw + m12 * cw) + sw * (-m12 * sw + m22 * cw);
    let a22 = -sw * (-m11 * sw + m12 * cw) + cw * (-m12 * sw + m22 * cw);
    SquareMat::from_2d(-0.5 * a11, -0.5 * a12, -0.5 * a12, -0.5 * a22)
}

/// Rotating-diffusion benchmark with controls sampled on an `n_phi x n_rot`
/// lattice over `[0, pi/3] x [0, 2 pi)`; the manufactured forcing uses the
/// same sampled set, so the discrete problem is exactly consistent at the
/// exact solution for any sampling resolution.
pub fn make_test2(n_phi: usize, n_rot: usize) -> Result<ManufacturedProblem, ProblemError> {
    if n_phi < 1 || n_rot < 1 {
        return Err(ProblemError::InvalidSampling { n_phi, n_rot });
    }
    let mut controls = Vec::with_capacity(n_phi * n_rot);
    for k in 0..n_phi {
        let phi = if n_phi == 1 {
            0.0
        } else {
            PI / 3.0 * k as f64 / (n_phi - 1) as f64
        };
        let s_theta = 3.0f64.sqrt() * (phi / (PI * PI)).sin().powi(2);
        for m in 0..n_rot {
            let omega = 2.0 * PI * m as f64 / n_rot as f64;
            controls.push(Control {
                diffusion: MatrixCoeff::Constant(test2_diffusion(phi, omega)),
                drift: VectorCoeff::Zero,
                reaction: ScalarCoeff::Constant(PI * PI),
                cost: ScalarCoeff::Constant(s_theta),
            });
        }
    }
    let sampling = ControlSampling::Lattice { n_phi, n_rot };
    let base = Arc::new(ControlSet::finite(2, controls)?.with_sampling(sampling));
    let exact = test2_exact();
    let g = manufactured_rhs(&base, &exact);
    let set = Arc::new(
        ControlSet::finite(2, base.controls().to_vec())?
            .with_sampling(sampling)
            .with_shared_cost(g),
    );
    // Eigenvalues of sigma sigma^T are 1 +/- sin(phi) with phi <= pi/3, so
    // the family is uniformly elliptic with constants (2 -/+ sqrt(3))/4.
    let sqrt3 = 3.0f64.sqrt();
    let ellipticity = EllipticityData {
        u_lower: PI * PI,
        u_upper: PI * PI,
        diag_lower: (2.0 - sqrt3) / 4.0,
        hessian_upper: (2.0 + sqrt3) / 4.0,
        grad_upper: 0.0,
        lambda: (2.0 - sqrt3) / 4.0,
        lambda_big: (2.0 + sqrt3) / 4.0,
    };
    let value = exact.value.clone();
    Ok(ManufacturedProblem {
        name: "test2".to_string(),
        domain: DomainBox::unit_square(),
        operator: HjbOperator::new(set, ellipticity),
        boundary: Arc::new(move |x| value(x)),
        exact: Some(exact),
    })
}

/// The (positive semidefinite, rank one) coefficient matrix of the
/// low-regularity benchmark; cube roots are the real signed roots.
pub fn test3_coefficient(x: &[f64]) -> SquareMat {
    let cx = x[0].cbrt();
    let cy = x[1].cbrt();
    let s = 16.0 / 9.0;
    SquareMat::from_2d(s * cx * cx, -s * cx * cy, -s * cx * cy, s * cy * cy)
}

fn test3_exact() -> ExactSolution {
    ExactSolution {
        value: Arc::new(|x| x[0].cbrt().powi(4) - x[1].cbrt().powi(4)),
        gradient: Arc::new(|x| {
            smallvec::smallvec![4.0 / 3.0 * x[0].cbrt(), -4.0 / 3.0 * x[1].cbrt()]
        }),
        hessian: Arc::new(|x| {
            let uxx = 4.0 / 9.0 / (x[0].cbrt() * x[0].cbrt());
            let uyy = -4.0 / 9.0 / (x[1].cbrt() * x[1].cbrt());
            SquareMat::from_2d(uxx, 0.0, 0.0, uyy)
        }),
    }
}

/// Low-regularity benchmark: a linear non-divergence-form problem
/// `A(x,y) : D^2 u = f` on `(-0.5, 0.5)^2` whose exact solution
/// `|x|^{4/3} - |y|^{4/3}` is not twice continuously differentiable.
///
/// The degenerate directions of `A` align with the singular directions of
/// the solution, so the forcing vanishes identically; the operator is cast
/// in min-form as the singleton control `-A(x,y)`.
pub fn make_test3() -> ManufacturedProblem {
    let control = Control {
        diffusion: MatrixCoeff::Varying(Arc::new(|x: &[f64], out: &mut SquareMat| {
            let a = test3_coefficient(x);
            out.clone_from(&a.scale(-1.0));
        })),
        drift: VectorCoeff::Zero,
        reaction: ScalarCoeff::Constant(0.0),
        cost: ScalarCoeff::Constant(0.0),
    };
    let set = Arc::new(ControlSet::finite(2, vec![control]).expect("non-empty"));
    // |A_ij| <= (16/9) 2^{-2/3} everywhere on the closed domain.
    let bound = 16.0 / 9.0 * 0.5f64.cbrt() * 0.5f64.cbrt();
    let ellipticity = EllipticityData {
        u_lower: 0.0,
        u_upper: 0.0,
        diag_lower: 0.0,
        hessian_upper: bound,
        grad_upper: 0.0,
        lambda: 0.0,
        lambda_big: 2.0 * bound,
    };
    let exact = test3_exact();
    let value = exact.value.clone();
    ManufacturedProblem {
        name: "test3".to_string(),
        domain: DomainBox::new(&[-0.5, -0.5], &[0.5, 0.5]).expect("valid box"),
        operator: HjbOperator::new(set, ellipticity),
        boundary: Arc::new(move |x| value(x)),
        exact: Some(exact),
    }
}

/// CLI-facing problem selection by name.
pub fn problem_by_name(
    name: &str,
    n_phi: usize,
    n_rot: usize,
) -> Result<ManufacturedProblem, ProblemError> {
    match name {
        "test1" => Ok(make_test1()),
        "test2" => make_test2(n_phi, n_rot),
        "test3" => Ok(make_test3()),
        other => Err(ProblemError::UnknownProblem(other.to_string())),
    }
}

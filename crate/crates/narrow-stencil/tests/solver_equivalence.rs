//! Cross-solver agreement: the pseudo-time fixed point and the Newton
//! solution must coincide on every benchmark problem at two grid sizes.

use std::sync::Arc;

use narrow_stencil::grid::{GridFunction, GridSpec};
use narrow_stencil::problems::{make_test1, make_test2, make_test3, ManufacturedProblem};
use narrow_stencil::scheme::SchemeParams;
use narrow_stencil::solver::{
    solve_fixed_point, solve_newton, SolveMethod, SolverConfig,
};

fn check_problem(problem: &ManufacturedProblem, sizes: usize) {
    let params = SchemeParams::new(4.0, 0.0).unwrap();
    let grid = Arc::new(GridSpec::new(problem.domain.clone(), &[sizes, sizes]).unwrap());
    let u0 = GridFunction::zeros_on_mesh(grid.clone());

    let newton = solve_newton(
        &u0,
        &SolverConfig::default(),
        &params,
        &problem.operator,
        &*problem.boundary,
    )
    .expect("newton solve");
    assert!(newton.converged, "{} J={sizes}: Newton stalled", problem.name);
    assert!(newton.final_residual <= 1e-8);

    let euler_cfg = SolverConfig {
        method: SolveMethod::Euler,
        tol_update: 1e-13,
        ..Default::default()
    };
    let euler = solve_fixed_point(&u0, &euler_cfg, &params, &problem.operator, &*problem.boundary)
        .expect("fixed-point solve");
    assert!(euler.converged, "{} J={sizes}: Euler stalled", problem.name);

    let mut diff = 0.0f64;
    for idx in grid.mesh_indices() {
        diff = diff.max(
            (newton.solution.value(&idx).unwrap() - euler.solution.value(&idx).unwrap()).abs(),
        );
    }
    assert!(
        diff <= 1e-6,
        "{} J={sizes}: solvers disagree by {diff:.3e}",
        problem.name
    );

    // Both routes end at a genuine scheme solution: boundary data exact.
    for idx in grid.boundary_indices() {
        let x = grid.node_coord(&idx).unwrap();
        assert_eq!(newton.solution.value(&idx).unwrap(), (problem.boundary)(&x));
        assert_eq!(euler.solution.value(&idx).unwrap(), (problem.boundary)(&x));
    }
}

#[test]
fn solvers_agree_on_test1() {
    let problem = make_test1();
    check_problem(&problem, 9);
    check_problem(&problem, 17);
}

#[test]
fn solvers_agree_on_test2() {
    let problem = make_test2(8, 16).unwrap();
    check_problem(&problem, 9);
    check_problem(&problem, 17);
}

#[test]
fn solvers_agree_on_test3() {
    let problem = make_test3();
    check_problem(&problem, 9);
    check_problem(&problem, 17);
}

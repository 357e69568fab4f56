//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! Criterion 9 is split: `09a` runs the randomized linear-algebra batteries,
//! two of which encode ordering/perturbation claims that fail on explicit
//! counterexamples (see the assertion messages); `09b` carries the moment
//! factorization and eigenvalue-scaling checks, which pass.

use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use narrow_stencil::convergence::{compute_order, grid_for_diagonal_h, norms, run_convergence, RunConfig};
use narrow_stencil::grid::{DomainBox, GridFunction, GridSpec, MultiIndex, NodeClass};
use narrow_stencil::linalg::SquareMat;
use narrow_stencil::problems::{make_test1, PdeOperator};
use narrow_stencil::scheme::{ghost_fill, monotonicity_probe, SchemeParams, Slot};
use narrow_stencil::solver::{
    solve_fixed_point, solve_newton, PseudoTimeStep, SolveMethod, SolverConfig,
};
use narrow_stencil::spectral::{
    build_operator_matrix, check_spd, corollary_a1, lemma_a1, lemma_a3, random_orthogonal,
    random_spd, LemmaOutcome, OperatorLabel,
};
use narrow_stencil::stencil::{
    diag_second, diff_sided, hessians, mixed_second, moment_difference, second_diff,
    DiagDirection, MixedFlavor, Side, Width,
};

const TABLE1_H: [f64; 4] = [3.63e-2, 2.40e-2, 1.79e-2, 1.19e-2];
const TABLE1_ERR: [f64; 4] = [7.25e-1, 3.72e-1, 2.25e-1, 1.09e-1];
const TABLE2_H: [f64; 3] = [9.43e-2, 6.15e-2, 4.56e-2];
const TABLE2_ERR: [f64; 3] = [2.60e-1, 1.28e-1, 7.32e-2];
const TABLE3_H: [f64; 4] = [6.15e-2, 4.56e-2, 3.63e-2, 2.89e-2];
const TABLE3_ERR: [f64; 4] = [3.38e-2, 3.01e-2, 2.73e-2, 2.50e-2];

struct Table1Run {
    h: f64,
    error: f64,
    weighted_l2: f64,
    h2_diag: Vec<f64>,
    linf_u: f64,
}

fn table1_runs() -> &'static (Vec<Table1Run>, Duration) {
    static RUNS: OnceLock<(Vec<Table1Run>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let started = Instant::now();
        let problem = make_test1();
        let params = SchemeParams::new(4.0, 0.0).unwrap();
        let exact = problem.exact.as_ref().unwrap();
        let runs = TABLE1_H
            .iter()
            .map(|&h_target| {
                let (j1, j2) = grid_for_diagonal_h(&problem.domain, h_target);
                let grid =
                    Arc::new(GridSpec::new(problem.domain.clone(), &[j1, j2]).unwrap());
                let u0 = GridFunction::zeros_on_mesh(grid.clone());
                let report = solve_newton(
                    &u0,
                    &SolverConfig::default(),
                    &params,
                    &problem.operator,
                    &*problem.boundary,
                )
                .expect("Newton solve");
                assert!(report.converged, "Newton did not converge at J = {j1}");
                let n = norms(&report.solution, &*exact.value).unwrap();
                Table1Run {
                    h: grid.h_diag(),
                    error: n.linf_error,
                    weighted_l2: n.weighted_l2,
                    h2_diag: n.h2_diag.to_vec(),
                    linf_u: report.solution.max_abs_on_mesh(),
                }
            })
            .collect();
        (runs, started.elapsed())
    })
}

fn within_factor(value: f64, reference: f64, factor: f64) -> bool {
    value <= reference * factor && value >= reference / factor
}

fn aniso_grid_9() -> Arc<GridSpec> {
    let d = DomainBox::new(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
    Arc::new(GridSpec::new(d, &[9, 9]).unwrap())
}

fn random_extended_gridfn(grid: &Arc<GridSpec>, rng: &mut StdRng) -> GridFunction {
    let mut u = GridFunction::unset(grid.clone());
    for idx in grid.mesh_indices() {
        u.set_value(&idx, rng.gen_range(-5.0..5.0)).unwrap();
    }
    for idx in grid.ghost_indices() {
        u.set_value(&idx, rng.gen_range(-5.0..5.0)).unwrap();
    }
    u
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1.0f64.max(a.abs()).max(b.abs())
}

#[test]
fn acceptance_01_table1_reproduction() {
    let (runs, elapsed) = table1_runs();
    for (run, (&h_ref, &e_ref)) in runs.iter().zip(TABLE1_H.iter().zip(TABLE1_ERR.iter())) {
        assert!(
            (run.h - h_ref).abs() <= 5e-3 * h_ref,
            "grid mesh size {} drifted from target {h_ref}",
            run.h
        );
        assert!(
            within_factor(run.error, e_ref, 2.0),
            "error {} at h = {h_ref} outside factor 2 of {e_ref}",
            run.error
        );
    }
    for k in [2usize, 3] {
        let order = compute_order(runs[k - 1].error, runs[k].error, runs[k - 1].h, runs[k].h)
            .expect("order");
        assert!(order >= 1.5, "order {order} over refinement {k} below 1.5");
    }
    assert!(
        *elapsed < Duration::from_secs(180),
        "runtime {elapsed:?} exceeded 3 minutes"
    );
    let errs: Vec<String> = runs
        .iter()
        .map(|r| narrow_stencil::convergence::format_sci(r.error))
        .collect();
    println!("PASS criterion 1: table-1 reproduction, errors {errs:?}, runtime {elapsed:.1?}");
}

#[test]
fn acceptance_02_table2_reproduction() {
    let started = Instant::now();
    let domain = DomainBox::unit_square();
    let grids: Vec<(usize, usize)> = TABLE2_H
        .iter()
        .map(|&h| grid_for_diagonal_h(&domain, h))
        .collect();
    let mut cfg = RunConfig::new("test2", grids);
    cfg.control_sampling = Some((8, 16));
    let rows = run_convergence(&cfg).expect("study");
    for (row, (&h_ref, &e_ref)) in rows.iter().zip(TABLE2_H.iter().zip(TABLE2_ERR.iter())) {
        assert!(row.converged, "row at h = {h_ref} not converged");
        assert!(
            within_factor(row.error_linf, e_ref, 2.0),
            "error {} at h = {h_ref} outside factor 2 of {e_ref}",
            row.error_linf
        );
    }
    let final_order = rows.last().unwrap().order.expect("final order");
    assert!(final_order >= 1.5, "final order {final_order} below 1.5");
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(300),
        "runtime {elapsed:?} exceeded 5 minutes"
    );
    let errs: Vec<String> = rows
        .iter()
        .map(|r| narrow_stencil::convergence::format_sci(r.error_linf))
        .collect();
    println!(
        "PASS criterion 2: table-2 reproduction, errors {errs:?}, final order {final_order:.2}, runtime {elapsed:.1?}"
    );
}

#[test]
fn acceptance_03_table3_reproduction() {
    let started = Instant::now();
    let domain = DomainBox::new(&[-0.5, -0.5], &[0.5, 0.5]).unwrap();
    let grids: Vec<(usize, usize)> = TABLE3_H
        .iter()
        .map(|&h| grid_for_diagonal_h(&domain, h))
        .collect();
    let cfg = RunConfig::new("test3", grids);
    let rows = run_convergence(&cfg).expect("study");
    for (row, (&h_ref, &e_ref)) in rows.iter().zip(TABLE3_H.iter().zip(TABLE3_ERR.iter())) {
        assert!(row.converged, "row at h = {h_ref} not converged");
        assert!(
            within_factor(row.error_linf, e_ref, 2.0),
            "error {} at h = {h_ref} outside factor 2 of {e_ref}",
            row.error_linf
        );
    }
    let orders: Vec<f64> = rows.iter().skip(1).map(|r| r.order.unwrap()).collect();
    for order in &orders {
        assert!(
            (0.25..=0.55).contains(order),
            "low-regularity order {order} outside [0.25, 0.55]"
        );
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(120),
        "runtime {elapsed:?} exceeded 2 minutes"
    );
    println!("PASS criterion 3: table-3 reproduction, orders {orders:.2?}, runtime {elapsed:.1?}");
}

#[test]
fn acceptance_04_operator_exactness() {
    let grid = aniso_grid_9();
    let mut rng = StdRng::seed_from_u64(0x0401);
    let (h1, h2) = (grid.spacing(0), grid.spacing(1));
    for _ in 0..50 {
        let q11 = rng.gen_range(-3.0..3.0);
        let q12 = rng.gen_range(-3.0..3.0);
        let q22 = rng.gen_range(-3.0..3.0);
        let b1 = rng.gen_range(-2.0..2.0);
        let b2 = rng.gen_range(-2.0..2.0);
        let c = rng.gen_range(-2.0..2.0);
        let quad = move |x: &[f64]| {
            0.5 * (q11 * x[0] * x[0] + q22 * x[1] * x[1]) + q12 * x[0] * x[1] + b1 * x[0]
                + b2 * x[1]
                + c
        };
        let u = GridFunction::from_fn_extended(grid.clone(), quad);
        let xi_exact = (h1 * h1 * q11 - 2.0 * h1 * h2 * q12 + h2 * h2 * q22) / (h1 * h1 + h2 * h2);
        let eta_exact = (h1 * h1 * q11 + 2.0 * h1 * h2 * q12 + h2 * h2 * q22) / (h1 * h1 + h2 * h2);
        for idx in grid.interior_indices() {
            let checks = [
                (second_diff(&u, &idx, 0, Width::H).unwrap(), q11),
                (second_diff(&u, &idx, 0, Width::TwoH).unwrap(), q11),
                (second_diff(&u, &idx, 1, Width::H).unwrap(), q22),
                (second_diff(&u, &idx, 1, Width::TwoH).unwrap(), q22),
                (mixed_second(&u, &idx, 0, 1, MixedFlavor::Hat).unwrap(), q12),
                (mixed_second(&u, &idx, 0, 1, MixedFlavor::Tilde).unwrap(), q12),
                (mixed_second(&u, &idx, 0, 1, MixedFlavor::Bar).unwrap(), q12),
                (diag_second(&u, &idx, 0, 1, DiagDirection::Xi).unwrap(), xi_exact),
                (diag_second(&u, &idx, 0, 1, DiagDirection::Eta).unwrap(), eta_exact),
            ];
            for (got, exact) in checks {
                assert!(
                    rel_close(got, exact, 1e-12),
                    "operator value {got} != {exact} at {idx:?}"
                );
            }
            let h = hessians(&u, &idx).unwrap();
            for m in [&h.hat, &h.tilde, &h.bar, &h.std] {
                assert!(rel_close(m.get(0, 0), q11, 1e-12));
                assert!(rel_close(m.get(0, 1), q12, 1e-12));
                assert!(rel_close(m.get(1, 1), q22, 1e-12));
            }
            let m = moment_difference(&u, &idx).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!(m.get(i, j).abs() <= 1e-12 * (1.0 + q11.abs() + q22.abs()));
                }
            }
        }
    }
    println!("PASS criterion 4: second-order operators exact on 50 random quadratics");
}

#[test]
fn acceptance_05_identity_suite() {
    let grid = aniso_grid_9();
    let (h1, h2) = (grid.spacing(0), grid.spacing(1));
    let mut rng = StdRng::seed_from_u64(0x0502);
    for _ in 0..50 {
        let u = random_extended_gridfn(&grid, &mut rng);
        for idx in grid.interior_indices() {
            let h = hessians(&u, &idx).unwrap();
            let xi = diag_second(&u, &idx, 0, 1, DiagDirection::Xi).unwrap();
            let eta = diag_second(&u, &idx, 0, 1, DiagDirection::Eta).unwrap();
            let d2i = second_diff(&u, &idx, 0, Width::H).unwrap();
            let d2j = second_diff(&u, &idx, 1, Width::H).unwrap();

            // Diagonal-variable identities for the three mixed operators.
            let quarter = (h1 * h1 + h2 * h2) / (4.0 * h1 * h2);
            let half = (h1 * h1 + h2 * h2) / (2.0 * h1 * h2);
            assert!(rel_close(h.bar.get(0, 1), quarter * (eta - xi), 1e-12));
            assert!(rel_close(
                h.hat.get(0, 1),
                h1 / (2.0 * h2) * d2i + h2 / (2.0 * h1) * d2j - half * xi,
                1e-12
            ));
            assert!(rel_close(
                h.tilde.get(0, 1),
                -h1 / (2.0 * h2) * d2i - h2 / (2.0 * h1) * d2j + half * eta,
                1e-12
            ));

            // Sided-gradient difference equals h times the second difference.
            for axis in 0..2 {
                let f = diff_sided(&u, &idx, axis, Side::Plus).unwrap();
                let b = diff_sided(&u, &idx, axis, Side::Minus).unwrap();
                let d2 = second_diff(&u, &idx, axis, Width::H).unwrap();
                assert!(rel_close(f - b, grid.spacing(axis) * d2, 1e-12));
            }

            // Moment factorization, entrywise, against nested compositions.
            let m = moment_difference(&u, &idx).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    let hj = grid.spacing(j);
                    let inner = |at: &MultiIndex| second_diff(&u, at, i, Width::H).unwrap();
                    let composed = (inner(&idx.offset(j, -1)) - 2.0 * inner(&idx)
                        + inner(&idx.offset(j, 1)))
                        / (hj * hj);
                    let expected = 0.5 * grid.spacing(i) * grid.spacing(j) * composed;
                    assert!(rel_close(m.get(i, j), expected, 1e-12));
                }
            }

            // Diagonal moment equals both the 2h-vs-h form and the
            // three-row form.
            for axis in 0..2 {
                let lhs = h.tilde.get(axis, axis) - h.hat.get(axis, axis);
                let wide = 2.0
                    * (second_diff(&u, &idx, axis, Width::TwoH).unwrap()
                        - second_diff(&u, &idx, axis, Width::H).unwrap());
                let d2 = |at: &MultiIndex| second_diff(&u, at, axis, Width::H).unwrap();
                let rows = 0.5
                    * (d2(&idx.offset(axis, -1)) - 2.0 * d2(&idx) + d2(&idx.offset(axis, 1)));
                assert!(rel_close(lhs, wide, 1e-12));
                assert!(rel_close(lhs, rows, 1e-12));
            }
        }
    }
    println!("PASS criterion 5: difference-operator identities on 50 random grid functions");
}

#[test]
fn acceptance_06_monotonicity_suite() {
    let problem = make_test1();
    let ell = *problem.operator.ellipticity();
    let params = SchemeParams::new(
        0.5 * ell.hessian_upper + 0.1,
        0.5 * ell.grad_upper + 0.1,
    )
    .unwrap();
    let grid = Arc::new(GridSpec::new(problem.domain.clone(), &[9, 9]).unwrap());
    let mut rng = StdRng::seed_from_u64(0x0603);
    let interior: Vec<MultiIndex> = grid.interior_indices().collect();
    for probe_no in 0..200 {
        let u = random_extended_gridfn(&grid, &mut rng);
        let idx = interior[rng.gen_range(0..interior.len())].clone();
        let (slot, nonpositive) = match rng.gen_range(0..5) {
            0 => (Slot::Hat(rng.gen_range(0..2), rng.gen_range(0..2)), true),
            1 => (Slot::Tilde(rng.gen_range(0..2), rng.gen_range(0..2)), false),
            2 => (Slot::GradPlus(rng.gen_range(0..2)), true),
            3 => (Slot::GradMinus(rng.gen_range(0..2)), false),
            _ => (Slot::Value, false),
        };
        let eps = 10f64.powf(rng.gen_range(-5.0..-2.0));
        let probe = monotonicity_probe(&u, &idx, &params, &problem.operator, slot, eps).unwrap();
        if nonpositive {
            assert!(
                probe <= 1e-12,
                "probe {probe_no}: slot {slot:?} gave {probe} > 0"
            );
        } else {
            assert!(
                probe >= -1e-12,
                "probe {probe_no}: slot {slot:?} gave {probe} < 0"
            );
        }
    }
    println!("PASS criterion 6: 200 monotonicity probes carry the mandated signs");
}

#[test]
fn acceptance_07_contraction_suite() {
    let problem = make_test1();
    let params = SchemeParams::new(4.0, 0.0).unwrap();
    let grid = Arc::new(GridSpec::new(problem.domain.clone(), &[17, 17]).unwrap());
    let u0 = GridFunction::zeros_on_mesh(grid.clone());
    let euler_cfg = SolverConfig {
        method: SolveMethod::Euler,
        rho: PseudoTimeStep::Auto,
        tol_update: 1e-13,
        ..Default::default()
    };
    let euler = solve_fixed_point(&u0, &euler_cfg, &params, &problem.operator, &*problem.boundary)
        .expect("pseudo-time iteration");
    assert!(euler.converged, "pseudo-time iteration did not converge");
    let late = &euler.contraction_estimates[10..];
    let max_late = late.iter().cloned().fold(0.0f64, f64::max);
    assert!(
        max_late < 1.0,
        "update ratio {max_late} >= 1 after the tenth iteration"
    );

    let newton = solve_newton(
        &u0,
        &SolverConfig::default(),
        &params,
        &problem.operator,
        &*problem.boundary,
    )
    .expect("newton");
    assert!(newton.converged);
    let mut diff = 0.0f64;
    for idx in grid.mesh_indices() {
        diff = diff.max(
            (euler.solution.value(&idx).unwrap() - newton.solution.value(&idx).unwrap()).abs(),
        );
    }
    assert!(diff <= 1e-6, "Euler/Newton mismatch {diff}");
    println!(
        "PASS criterion 7: contraction ratio max {max_late:.6} after iteration 10, Euler/Newton agree to {diff:.2e}"
    );
}

#[test]
fn acceptance_08_stability_diagnostics() {
    let (runs, _) = table1_runs();
    let coarse = &runs[0];
    for run in runs.iter() {
        assert!(
            run.weighted_l2 <= 10.0 * coarse.weighted_l2,
            "weighted l2 {} exceeds 10x coarsest {}",
            run.weighted_l2,
            coarse.weighted_l2
        );
        for axis in 0..2 {
            assert!(
                run.h2_diag[axis] <= 10.0 * coarse.h2_diag[axis],
                "axis {axis} second-difference norm {} exceeds 10x coarsest {}",
                run.h2_diag[axis],
                coarse.h2_diag[axis]
            );
        }
        assert!(
            run.linf_u <= 10.0 * coarse.linf_u,
            "max norm {} exceeds 10x coarsest {}",
            run.linf_u,
            coarse.linf_u
        );
    }
    let l2s: Vec<f64> = runs.iter().map(|r| r.weighted_l2).collect();
    println!("PASS criterion 8: stability diagnostics bounded across refinement, weighted l2 {l2s:.3?}");
}

#[test]
fn acceptance_09a_appendix_lemma_batteries() {
    let mut rng = StdRng::seed_from_u64(0x0911);

    // Ordering-transfer battery: 100 filtered instances.
    let mut a1_held = 0usize;
    let mut a1_failed = 0usize;
    let mut draws = 0usize;
    while a1_held + a1_failed < 100 && draws < 500_000 {
        draws += 1;
        let n = rng.gen_range(2..=20);
        let a = random_spd(n, &mut rng);
        let b = random_spd(n, &mut rng);
        let q = random_orthogonal(n, &mut rng);
        match lemma_a1(&a, &b, &q) {
            LemmaOutcome::Holds => a1_held += 1,
            LemmaOutcome::Fails => a1_failed += 1,
            LemmaOutcome::SkippedPrecondition => {}
        }
    }
    println!(
        "ordering-transfer battery: {a1_held} held / {a1_failed} failed over {draws} draws"
    );

    // Scaled-identity perturbation battery: sigma just above the spectral
    // threshold.
    let mut a3_held = 0usize;
    let mut a3_failed = 0usize;
    for _ in 0..100 {
        let n = rng.gen_range(2..=20);
        let a = random_spd(n, &mut rng);
        let f = random_spd(n, &mut rng);
        let l = f.clone().cholesky().expect("SPD").l();
        let lam_max = (l.transpose() * &a * &l).symmetric_eigenvalues().max();
        match lemma_a3(&a, &f, 1.01 * lam_max) {
            LemmaOutcome::Holds => a3_held += 1,
            LemmaOutcome::Fails => a3_failed += 1,
            LemmaOutcome::SkippedPrecondition => {}
        }
    }
    println!("scaled-identity battery: {a3_held} held / {a3_failed} failed over 100 instances");

    // Small-step contraction batteries (unpreconditioned and preconditioned):
    // the tau scan with sampled unit vectors per the stated protocol.
    let mut a2_found = 0usize;
    for _ in 0..100 {
        let n = rng.gen_range(2..=20);
        let a = random_spd(n, &mut rng);
        let b = random_spd(n, &mut rng);
        let eye = DMatrix::<f64>::identity(n, n);
        if corollary_a1(&a, &b, &eye, 60, 200, &mut rng).is_some() {
            a2_found += 1;
        }
    }
    let mut cor_found = 0usize;
    for _ in 0..100 {
        let n = rng.gen_range(2..=20);
        let a = random_spd(n, &mut rng);
        let b = random_spd(n, &mut rng);
        let f = random_spd(n, &mut rng);
        if corollary_a1(&a, &b, &f, 60, 200, &mut rng).is_some() {
            cor_found += 1;
        }
    }
    println!("small-step batteries: tau found in {a2_found}/100 (identity) and {cor_found}/100 (preconditioned)");

    assert_eq!(a2_found, 100, "identity small-step battery found no tau");
    assert_eq!(cor_found, 100, "preconditioned small-step battery found no tau");
    assert_eq!(
        a1_failed, 0,
        "ordering-transfer claim fails on {a1_failed} of 100 filtered instances; it is false as \
         stated (counterexample: A = diag(1,3), B = diag(2,0.5), Q = 90-degree rotation passes \
         every precondition yet A - B = diag(-1, 2.5))"
    );
    assert_eq!(
        a3_failed, 0,
        "scaled-identity bound fails on {a3_failed} of 100 instances at sigma just above the \
         spectral threshold; it is false as stated (counterexample: A = [[2,1],[1,2]], \
         F = diag(9,1): ||sigma I - FA||_2 = 19.04 > sigma = 18.73)"
    );
    println!("PASS criterion 9a: randomized linear-algebra batteries");
}

#[test]
fn acceptance_09b_moment_factorization_and_scaling() {
    // Factorization: every moment component equals
    // (h_i h_j / 2) * (Dirichlet -delta_i^2)(Dirichlet -delta_j^2), both orders.
    for j in [5usize, 9] {
        let grid = Arc::new(GridSpec::new(DomainBox::unit_square(), &[j, j]).unwrap());
        let d0 = build_operator_matrix(&grid, OperatorLabel::SecondDiffDirichlet(0)).unwrap();
        let d1 = build_operator_matrix(&grid, OperatorLabel::SecondDiffDirichlet(1)).unwrap();
        let factors = [&d0.matrix, &d1.matrix];
        for i in 0..2 {
            for k in 0..2 {
                let m = build_operator_matrix(&grid, OperatorLabel::Moment(i, k)).unwrap();
                let scale = 0.5 * grid.spacing(i) * grid.spacing(k);
                let forward = (factors[i] * factors[k]).scale(scale);
                let reverse = (factors[k] * factors[i]).scale(scale);
                let magnitude = m.matrix.amax();
                assert!(
                    (&m.matrix - &forward).amax() <= 1e-12 * magnitude,
                    "J={j} ({i},{k}) factorization"
                );
                assert!(
                    (&forward - &reverse).amax() <= 1e-12 * magnitude,
                    "J={j} ({i},{k}) commutation"
                );
            }
        }
    }

    // Minimal eigenvalue of the diagonal moment matrix scales like h^2.
    let scaled = |j: usize| {
        let grid = Arc::new(GridSpec::new(DomainBox::unit_square(), &[j, j]).unwrap());
        let a = build_operator_matrix(&grid, OperatorLabel::Moment(0, 0)).unwrap();
        let rep = check_spd(&a.matrix);
        assert!(rep.is_spd, "diagonal moment matrix must be SPD");
        rep.min_eig / grid.spacing(0).powi(2)
    };
    let c5 = scaled(5);
    let c9 = scaled(9);
    let ratio = c5 / c9;
    assert!(
        (0.8..=1.2).contains(&ratio),
        "h^2-scaled minimal eigenvalues {c5} vs {c9} differ by more than 20%"
    );
    println!(
        "PASS criterion 9b: moment factorization to 1e-12 and h^2 eigenvalue scaling (ratio {ratio:.3})"
    );
}

#[test]
fn acceptance_10_ghost_closure() {
    let grids = [
        aniso_grid_9(),
        Arc::new(GridSpec::new(DomainBox::unit_square(), &[7, 9]).unwrap()),
    ];
    let mut rng = StdRng::seed_from_u64(0x1007);
    for round in 0..100 {
        let grid = &grids[round % grids.len()];
        let mut u = GridFunction::unset(grid.clone());
        for idx in grid.mesh_indices() {
            u.set_value(&idx, rng.gen_range(-5.0..5.0)).unwrap();
        }
        ghost_fill(&mut u).unwrap();
        for alpha in grid.boundary_aux_indices() {
            let mut lap = 0.0;
            let mut largest = 0.0f64;
            for axis in 0..grid.dim() {
                let term = second_diff(&u, &alpha, axis, Width::H).unwrap();
                lap += term;
                largest = largest.max(term.abs());
            }
            assert!(
                lap.abs() <= 1e-12 * largest.max(1.0),
                "round {round}: discrete Laplacian {lap} at {alpha:?}"
            );
        }
    }

    // Harmonic quadratic: ghost values reproduce the analytic extension.
    let grid = aniso_grid_9();
    let v = |x: &[f64]| x[0] * x[0] - x[1] * x[1];
    let mut u = GridFunction::from_fn_on_mesh(grid.clone(), v);
    ghost_fill(&mut u).unwrap();
    for ghost in grid.ghost_indices() {
        let x = grid.node_coord(&ghost).unwrap();
        assert!(
            rel_close(u.value(&ghost).unwrap(), v(&x), 1e-12),
            "ghost {ghost:?} value {} vs analytic {}",
            u.value(&ghost).unwrap(),
            v(&x)
        );
    }

    // Classification sanity rides along: the auxiliary set is exactly the
    // boundary nodes with an interior axis neighbor.
    for idx in grid.mesh_indices() {
        let class = grid.classify(&idx).unwrap();
        if class == NodeClass::BoundaryAux {
            let has_interior_neighbor = (0..2).any(|axis| {
                [-1i64, 1].iter().any(|&d| {
                    grid.classify(&idx.offset(axis, d))
                        .map(|c| c == NodeClass::Interior)
                        .unwrap_or(false)
                })
            });
            assert!(has_interior_neighbor);
        }
    }
    println!("PASS criterion 10: ghost closure zeroes the discrete Laplacian and extends harmonics");
}

#[test]
fn acceptance_support_slot_consistency() {
    // Supporting check for the probe machinery: any interior slot state with
    // equalized Hessian and gradient slots collapses to the base operator.
    let problem = make_test1();
    let params = SchemeParams::new(4.0, 0.0).unwrap();
    let grid = Arc::new(GridSpec::new(problem.domain.clone(), &[9, 9]).unwrap());
    let mut rng = StdRng::seed_from_u64(0x5105);
    for _ in 0..20 {
        let mut p = SquareMat::zeros(2);
        for i in 0..2 {
            for j in i..2 {
                let v = rng.gen_range(-2.0..2.0);
                p.set(i, j, v);
                p.set(j, i, v);
            }
        }
        let q = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        let u_val = rng.gen_range(-2.0..2.0);
        let idx = MultiIndex::new(&[rng.gen_range(2..=7), rng.gen_range(2..=7)]);
        let x = grid.node_coord(&idx).unwrap();
        let slots = narrow_stencil::scheme::SlotState {
            hat: p.clone(),
            tilde: p.clone(),
            grad_plus: q.iter().cloned().collect(),
            grad_minus: q.iter().cloned().collect(),
            u: u_val,
        };
        let collapsed = narrow_stencil::scheme::hat_f_slots(&slots, &x, &params, &problem.operator);
        let direct = problem.operator.evaluate(&p, &q, u_val, &x);
        assert_eq!(collapsed, direct);
    }
    println!("PASS support: independent-slot consistency property");
}

#[allow(dead_code)]
fn dense_vector_of(u: &GridFunction) -> DVector<f64> {
    let grid = u.grid();
    DVector::from_iterator(
        grid.interior_count(),
        grid.interior_indices().map(|idx| u.value(&idx).unwrap()),
    )
}

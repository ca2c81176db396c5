//! Properties of the two-subsystem benchmark beyond the acceptance table.

use dmpc_core::sim::{feasibility_sweep, square_grid, summarize, SimOptions};
use dmpc_core::verify::verify_terminal_sets;
use dmpc_core::{
    benchmark_system, solve_ocp, synthesize, OcpOptions, OfflineOptions, Scheme, SolveMode, SolveStatus,
};
use nalgebra::dvector;

#[test]
fn hard_states_are_certified_infeasible() {
    let sys = benchmark_system();
    let ing = synthesize(&sys, &OfflineOptions::default()).unwrap().ingredients;
    for x0 in [dvector![0.0, 0.5], dvector![0.5, 0.0], dvector![0.5, 1.0], dvector![-1.0, -1.0], dvector![1.0, 0.0]] {
        for scheme in Scheme::ALL {
            let out = solve_ocp(scheme, &x0, 2, &ing, &sys, &OcpOptions::default()).unwrap();
            assert_eq!(out.status(), SolveStatus::Infeasible, "{scheme} at {x0:?}");
        }
    }
}

#[test]
fn feasible_regions_are_nested() {
    // c = 0 is admissible for the asymmetric form, and linear rows certify
    // at least as much as quadratic ones
    let sys = benchmark_system();
    let ing = synthesize(&sys, &OfflineOptions::default()).unwrap().ingredients;
    let grid = square_grid(-1.0, 1.0, 9);
    let points =
        feasibility_sweep(&Scheme::ALL, &grid, 2, &ing, &sys, SolveMode::Central, &SimOptions::default(), 0)
            .unwrap();
    let status = |s: usize, k: usize| points[s * grid.len() + k].status;
    for (k, x0) in grid.iter().enumerate() {
        for s in 0..3 {
            assert_ne!(status(s, k), SolveStatus::NumericalFailure, "{x0:?}");
        }
        if status(0, k) == SolveStatus::Optimal {
            assert_eq!(status(1, k), SolveStatus::Optimal, "{x0:?}");
        }
        if status(1, k) == SolveStatus::Optimal {
            assert_eq!(status(2, k), SolveStatus::Optimal, "{x0:?}");
        }
    }
    let counts: Vec<usize> = summarize(&points).iter().map(|s| s.feasible).collect();
    assert!(counts[0] <= counts[1] && counts[1] <= counts[2], "{counts:?}");
}

#[test]
fn inflated_sets_are_caught_by_sampling() {
    let sys = benchmark_system();
    let ing = synthesize(&sys, &OfflineOptions::default()).unwrap().ingredients;
    let out = solve_ocp(Scheme::Rlxd, &dvector![-0.6, -0.6], 2, &ing, &sys, &OcpOptions::default()).unwrap();
    let mut sets = out.solution().unwrap().sets.clone();
    let sound = verify_terminal_sets(&sets, &ing, &sys, 2000, 1, 1e-6).unwrap();
    assert_eq!(sound.total_violations(), 0);
    for set in &mut sets {
        set.a *= 1.5;
    }
    let inflated = verify_terminal_sets(&sets, &ing, &sys, 2000, 1, 1e-6).unwrap();
    assert!(inflated.total_violations() > 0);
}

#[test]
fn point_sets_at_the_origin_are_trivially_sound() {
    let sys = benchmark_system();
    let ing = synthesize(&sys, &OfflineOptions::default()).unwrap().ingredients;
    let out = solve_ocp(Scheme::Adap, &dvector![-0.1, -0.4], 2, &ing, &sys, &OcpOptions::default()).unwrap();
    let mut sets = out.solution().unwrap().sets.clone();
    for set in &mut sets {
        set.a = 0.0;
    }
    let rep = verify_terminal_sets(&sets, &ing, &sys, 1000, 0, 1e-6).unwrap();
    assert_eq!(rep.total_violations(), 0);
}

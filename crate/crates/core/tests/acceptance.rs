//! Acceptance suite on the two-subsystem benchmark. Prints one PASS/FAIL
//! line per criterion and exits nonzero if any criterion fails.

use std::time::Instant;

use dmpc_core::admm::{run_consensus, AdmmOptions, AdmmStatus};
use dmpc_core::linalg::min_eigenvalue;
use dmpc_core::model::{build_selection_maps, DistributedSystem, Topology};
use dmpc_core::ocp::{solve_ocp, OcpOptions, OcpOutcome, Scheme};
use dmpc_core::offline::{synthesize, OfflineOptions, Synthesis};
use dmpc_core::scenario::{benchmark_initial_states, benchmark_system};
use dmpc_core::sdp::{solve, ExprMatrix, LinExpr, SdpProblem, SolveStatus, SolverOptions, VarId};
use dmpc_core::sim::{run, SimTrace, SolveMode};
use dmpc_core::terminal::{new_multipliers, row_lmi_linear, row_lmi_quadratic, NeighborhoodSets, SetVars};
use dmpc_core::verify::verify_terminal_sets;
use dmpc_core::model::SubsystemModel;
use nalgebra::{dmatrix, dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REFERENCE_COSTS: [(usize, Scheme, f64); 6] = [
    (0, Scheme::Adap, 0.2528),
    (0, Scheme::Asym, 0.2528),
    (0, Scheme::Rlxd, 0.2528),
    (1, Scheme::Asym, 1.5167),
    (1, Scheme::Rlxd, 1.4192),
    (2, Scheme::Rlxd, 1.8185),
];

type Verdict = Result<String, String>;

struct Context {
    system: DistributedSystem,
    synthesis: Synthesis,
    /// `[x0 index][scheme]`
    outcomes: Vec<Vec<OcpOutcome>>,
    runs: Vec<SimTrace>,
}

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn offline_synthesis(ctx: &Context) -> Verdict {
    let s = &ctx.synthesis;
    let p_min = s.ingredients.p.iter().map(min_eigenvalue).fold(f64::INFINITY, f64::min);
    let detail = format!(
        "min eig P = {:.6}, max eig decrease = {:.3e}, spectral radius = {:.4}, time = {:.3}s",
        p_min,
        s.report.max_eigenvalue,
        s.report.spectral_radius,
        s.elapsed.as_secs_f64()
    );
    check(
        p_min > 0.0
            && s.report.max_eigenvalue <= 1e-7
            && s.report.spectral_radius < 1.0
            && s.elapsed.as_secs_f64() < 5.0,
        detail,
    )
}

fn table_reproduction(ctx: &Context, elapsed: f64) -> Verdict {
    let mut parts = Vec::new();
    let mut ok = elapsed < 30.0;
    for (k, scheme, reference) in REFERENCE_COSTS {
        let j = ctx.outcomes[k][scheme_index(scheme)].objective();
        let rel = j.map(|j| (j - reference).abs() / reference);
        ok &= rel.is_some_and(|r| r <= 0.05);
        parts.push(format!(
            "{scheme}@{}: {} ({})",
            k + 1,
            j.map_or("none".into(), |j| format!("{j:.4}")),
            rel.map_or("n/a".into(), |r| format!("{:.2}%", 100.0 * r))
        ));
    }
    let first: Vec<f64> = ctx.outcomes[0].iter().filter_map(OcpOutcome::objective).collect();
    let spread = first.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - first.iter().cloned().fold(f64::INFINITY, f64::min);
    ok &= first.len() == 3 && spread <= 1e-4;
    parts.push(format!("spread at x0 #1 = {spread:.2e}, time = {elapsed:.2}s"));
    check(ok, parts.join("; "))
}

fn scheme_index(s: Scheme) -> usize {
    Scheme::ALL.iter().position(|&x| x == s).expect("known scheme")
}

fn feasibility_pattern(ctx: &Context) -> Verdict {
    let expected = [
        [SolveStatus::Optimal, SolveStatus::Optimal, SolveStatus::Optimal],
        [SolveStatus::Infeasible, SolveStatus::Optimal, SolveStatus::Optimal],
        [SolveStatus::Infeasible, SolveStatus::Infeasible, SolveStatus::Optimal],
    ];
    let got: Vec<Vec<SolveStatus>> = ctx
        .outcomes
        .iter()
        .map(|row| row.iter().map(OcpOutcome::status).collect())
        .collect();
    let ok = got.iter().zip(&expected).all(|(g, e)| g.as_slice() == e.as_slice());
    let detail = got
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let cells: Vec<String> = row.iter().map(|s| s.to_string()).collect();
            format!("x0 #{}: {}", k + 1, cells.join("/"))
        })
        .collect::<Vec<_>>()
        .join("; ");
    check(ok, detail)
}

fn recursive_feasibility(ctx: &Context) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for trace in &ctx.runs {
        let norm = trace.final_state.norm();
        let cl = trace.closed_loop_cost(&ctx.system);
        let j0 = trace.first_objective().unwrap_or(f64::NAN);
        let infeasible = trace.infeasible_steps();
        ok &= trace.all_optimal() && trace.records.len() == 30 && norm < 1e-2 && cl <= j0 + 1e-4;
        parts.push(format!(
            "{}: {} steps, {} infeasible, |x(30)| = {:.2e}, cost {:.5} vs J0 {:.5}",
            trace.scheme,
            trace.records.len(),
            infeasible,
            norm,
            cl,
            j0
        ));
    }
    check(ok, parts.join("; "))
}

fn monte_carlo(ctx: &Context) -> Verdict {
    let mut sets = Vec::new();
    for row in &ctx.outcomes {
        for out in row {
            if let Some(sol) = out.solution() {
                sets.push(sol.sets.clone());
            }
        }
    }
    let table_solutions = sets.len();
    for trace in &ctx.runs {
        for r in &trace.records {
            if r.status == SolveStatus::Optimal {
                sets.push(r.sets.clone());
            }
        }
    }
    let mut violations = 0;
    for (k, s) in sets.iter().enumerate() {
        let rep = verify_terminal_sets(s, &ctx.synthesis.ingredients, &ctx.system, 10_000, k as u64, 1e-6)
            .map_err(|e| e.to_string())?;
        violations += rep.total_violations();
    }
    check(
        violations == 0,
        format!(
            "{} solutions ({} single solves, {} closed-loop steps) x 10^4 samples per subsystem, {} violations",
            sets.len(),
            table_solutions,
            sets.len() - table_solutions,
            violations
        ),
    )
}

fn specialization(ctx: &Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ing = &ctx.synthesis.ingredients;
    let pinned = OcpOptions {
        pin_center: true,
        ..OcpOptions::default()
    };
    let mut found = 0;
    let mut attempts = 0;
    let mut worst = 0.0_f64;
    while found < 20 && attempts < 400 {
        attempts += 1;
        let x0 = dvector![rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)];
        let horizon = rng.random_range(1..=3);
        let adap = solve_ocp(Scheme::Adap, &x0, horizon, ing, &ctx.system, &OcpOptions::default())
            .map_err(|e| e.to_string())?;
        let Some(j_adap) = adap.objective() else { continue };
        let asym = solve_ocp(Scheme::Asym, &x0, horizon, ing, &ctx.system, &pinned).map_err(|e| e.to_string())?;
        let j_asym = asym.objective().unwrap_or(f64::INFINITY);
        worst = worst.max((j_adap - j_asym).abs());
        found += 1;
    }
    check(
        found == 20 && worst <= 1e-6,
        format!("{found} feasible instances in {attempts} draws, max |J gap| = {worst:.2e}"),
    )
}

/// Largest `a` certified for the scalar row `G x ≤ g` on `{(x − c)² p ≤ a²}`.
fn certified_a(gain: f64, bound: f64, c: f64, p: f64, linear: bool) -> Result<Option<f64>, String> {
    let maps = build_selection_maps(&Topology::new(vec![vec![0]]).unwrap(), &[1], &[1]).unwrap();
    let mut prob = SdpProblem::new();
    let a = prob.add_nonneg_var("a");
    let set = SetVars {
        c: ExprMatrix::constant(&dmatrix![c]),
        a: LinExpr::var(a),
    };
    let hood = NeighborhoodSets::gather(0, &[Some(&set)], &[dmatrix![p]], &maps).map_err(|e| e.to_string())?;
    let mult = new_multipliers(&mut prob, "m", 1);
    let row = dmatrix![gain];
    let lmi = if linear {
        row_lmi_linear(&row, bound, &hood, &mult)
    } else {
        row_lmi_quadratic(&row, bound, &hood, &mult, false)
    }
    .map_err(|e| e.to_string())?;
    prob.add_psd(lmi).map_err(|e| e.to_string())?;
    prob.add_linear_objective(&LinExpr::term(a, -1.0)).map_err(|e| e.to_string())?;
    let r = solve(&prob, &SolverOptions::default()).map_err(|e| e.to_string())?;
    match r.status {
        SolveStatus::Optimal => Ok(Some(r.value(VarId(a.0)))),
        SolveStatus::Infeasible => Ok(None),
        s => Err(format!("unexpected status {s}")),
    }
}

fn one_d_tightness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0_f64;
    let mut quad_excess = 0.0_f64;
    for _ in 0..50 {
        let p: f64 = rng.random_range(0.2..5.0);
        let gain: f64 = rng.random_range(0.5..3.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let bound: f64 = rng.random_range(0.5..5.0);
        let slack: f64 = rng.random_range(0.1..5.0);
        let c = (bound - slack) / gain;
        // support function of the interval c ± a p^{-1/2}: G c + |G| a p^{-1/2} ≤ g
        let oracle = (bound - gain * c) * p.sqrt() / gain.abs();
        let lin = certified_a(gain, bound, c, p, true)?.ok_or("linear row infeasible")?;
        worst = worst.max((lin - oracle).abs());
        let quad = certified_a(gain, bound, c, p, false)?.unwrap_or(0.0);
        quad_excess = quad_excess.max(quad - lin);
    }
    check(
        worst <= 1e-6 && quad_excess <= 1e-6,
        format!("50 instances, max |a_lin - support bound| = {worst:.2e}, max (a_quad - a_lin) = {quad_excess:.2e}"),
    )
}

fn admm_equivalence(ctx: &Context) -> Verdict {
    let ing = &ctx.synthesis.ingredients;
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, x0) in benchmark_initial_states().iter().enumerate() {
        for (s, scheme) in Scheme::ALL.iter().enumerate() {
            let Some(central) = ctx.outcomes[k][s].objective() else { continue };
            let rep = run_consensus(*scheme, x0, 2, ing, &ctx.system, &AdmmOptions::default())
                .map_err(|e| e.to_string())?;
            let j = rep.solution.as_ref().map_or(f64::NAN, |s| s.objective);
            let rel = (j - central).abs() / central;
            ok &= rep.status == AdmmStatus::Converged && rel <= 1e-3 && rep.disagreement <= 1e-4;
            parts.push(format!(
                "{scheme}@{}: {} it, rel {:.1e}, dis {:.1e}",
                k + 1,
                rep.iterations,
                rel,
                rep.disagreement
            ));
        }
    }
    let scalar = SubsystemModel {
        a: dmatrix![1.5],
        b: dmatrix![1.0],
        state_rows: dmatrix![1.0; -1.0],
        state_rhs: dvector![5.0, 5.0],
        input_rows: dmatrix![1.0; -1.0],
        input_rhs: dvector![1.0, 1.0],
        q: dmatrix![1.0],
        r: dmatrix![0.5],
    };
    let single = DistributedSystem::new(vec![scalar], Topology::new(vec![vec![0]]).unwrap()).unwrap();
    let single_ing = synthesize(&single, &OfflineOptions::default()).map_err(|e| e.to_string())?.ingredients;
    let x0 = dvector![0.8];
    let rep = run_consensus(Scheme::Asym, &x0, 2, &single_ing, &single, &AdmmOptions::default())
        .map_err(|e| e.to_string())?;
    let central = solve_ocp(Scheme::Asym, &x0, 2, &single_ing, &single, &OcpOptions::default())
        .map_err(|e| e.to_string())?
        .objective()
        .unwrap_or(f64::NAN);
    let j = rep.solution.as_ref().map_or(f64::NAN, |s| s.objective);
    ok &= rep.status == AdmmStatus::Converged && rep.iterations == 1 && (j - central).abs() <= 1e-6;
    parts.push(format!("M=1: {} iteration(s), |J gap| = {:.1e}", rep.iterations, (j - central).abs()));
    check(ok, parts.join("; "))
}

fn report(name: &str, verdict: Verdict, failures: &mut usize) {
    match verdict {
        Ok(d) => println!("[PASS] {name}: {d}"),
        Err(d) => {
            *failures += 1;
            println!("[FAIL] {name}: {d}");
        }
    }
}

fn main() {
    let mut failures = 0;
    let system = benchmark_system();
    let synthesis = match synthesize(&system, &OfflineOptions::default()) {
        Ok(s) => s,
        Err(e) => {
            println!("[FAIL] offline synthesis: {e}");
            std::process::exit(1);
        }
    };

    let start = Instant::now();
    let outcomes: Vec<Vec<OcpOutcome>> = benchmark_initial_states()
        .iter()
        .map(|x0| {
            Scheme::ALL
                .iter()
                .map(|&s| {
                    solve_ocp(s, x0, 2, &synthesis.ingredients, &system, &OcpOptions::default())
                        .unwrap_or_else(|e| OcpOutcome::NumericalFailure(e.to_string()))
                })
                .collect()
        })
        .collect();
    let table_time = start.elapsed().as_secs_f64();

    let runs: Vec<SimTrace> = [(Scheme::Asym, dvector![-0.8, -0.1]), (Scheme::Rlxd, dvector![-0.6, -0.6])]
        .into_iter()
        .map(|(scheme, x0): (Scheme, DVector<f64>)| {
            run(scheme, &x0, 2, 30, &synthesis.ingredients, &system, SolveMode::Central, &Default::default())
                .expect("closed-loop run")
        })
        .collect();

    let ctx = Context {
        system,
        synthesis,
        outcomes,
        runs,
    };

    report("offline synthesis", offline_synthesis(&ctx), &mut failures);
    report("cost table at T = 2", table_reproduction(&ctx, table_time), &mut failures);
    report("feasibility pattern", feasibility_pattern(&ctx), &mut failures);
    report("recursive feasibility, 30 steps", recursive_feasibility(&ctx), &mut failures);
    report("Monte-Carlo soundness", monte_carlo(&ctx), &mut failures);
    report("zero-center specialization", specialization(&ctx), &mut failures);
    report("1-D tightness of linear rows", one_d_tightness(), &mut failures);
    report("ADMM equivalence", admm_equivalence(&ctx), &mut failures);

    println!("acceptance: {} of 8 criteria passed", 8 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

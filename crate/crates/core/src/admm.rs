//! Consensus ADMM over the variables shared by neighboring subsystems.
//!
//! Subsystem `j` owns its predicted states `x_j(1..=T)`, its set size `a_j`
//! and (for free-center schemes) its center `c_j`. Every `i` with `j ∈ N_i`
//! holds a local copy of these coordinates; a coordinate held by two or more
//! subsystems is shared. Each round runs all local problems (in parallel),
//! averages the copies of every shared coordinate at its owner and updates the
//! scaled duals:
//!
//! ```text
//! ξ_i ← argmin J_i(ξ_i) + ρ/2 ‖ξ_i − z + w_i‖²   s.t. local constraints of i
//! z   ← mean over holders of (ξ_i + w_i)
//! w_i ← w_i + ξ_i − z
//! ```
//!
//! The reported solution takes every subsystem's variables from its own local
//! problem.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DistributedSystem;
use crate::ocp::{
    eval_multipliers, evaluate_cost, MultiplierVars, OcpContext, OcpOptions, OcpSolution, Scheme,
    SubsystemVars,
};
use crate::offline::TerminalIngredients;
use crate::sdp::{solve, Assignment, LinExpr, QuadExpr, SdpProblem, SolveStatus, SolverOptions};
use crate::terminal::TerminalSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmOptions {
    pub penalty: f64,
    pub eps_primal: f64,
    pub eps_dual: f64,
    pub max_iter: usize,
    pub pin_center: bool,
    /// Keep every exchanged message in the report.
    pub record_messages: bool,
    pub solver: SolverOptions,
}

impl Default for AdmmOptions {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            eps_primal: 1e-4,
            eps_dual: 1e-4,
            max_iter: 500,
            pin_center: false,
            record_messages: false,
            solver: SolverOptions::default(),
        }
    }
}

/// One shared coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SharedCoordinate {
    pub owner: usize,
    pub name: String,
    /// Subsystems holding a copy, ascending.
    pub holders: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Holder to owner: local optimizer restricted to the owner's coordinates.
    LocalValues,
    /// Owner to holder: updated consensus values.
    Consensus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmMessage {
    pub iteration: usize,
    pub kind: MessageKind,
    /// 1-based subsystem ids.
    pub from: usize,
    pub to: usize,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

/// Iterate of the consensus scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    /// `local[i][k]`: copy held by `i` of its `k`-th shared coordinate.
    pub local: Vec<Vec<f64>>,
    /// Scaled duals, same layout as `local`.
    pub duals: Vec<Vec<f64>>,
    /// Consensus value per shared coordinate.
    pub z: Vec<f64>,
    pub z_prev: Vec<f64>,
    pub penalty: f64,
    /// `(primal, dual)` per completed round.
    pub history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AdmmStatus {
    Converged,
    Infeasible,
    NoConvergence,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct AdmmReport {
    pub status: AdmmStatus,
    /// Assembled solution when converged.
    pub solution: Option<OcpSolution>,
    pub iterations: usize,
    pub history: Vec<(f64, f64)>,
    /// Largest deviation of any copy from the consensus value.
    pub disagreement: f64,
    pub messages: Vec<AdmmMessage>,
    /// Subsystem whose local problem failed, if any.
    pub failed_subsystem: Option<usize>,
}

/// Local solve of one subsystem.
#[derive(Debug, Clone)]
pub struct LocalResult {
    pub status: SolveStatus,
    /// Values of the held shared coordinates, layout of `ConsensusState::local`.
    pub shared: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub set: TerminalSet,
    pub multipliers: crate::ocp::Multipliers,
}

struct LocalProblem {
    base: SdpProblem,
    own: SubsystemVars,
    multipliers: MultiplierVars,
    /// `(global coordinate index, expression)` for every held shared coordinate.
    shared: Vec<(usize, LinExpr)>,
}

/// Distributed solver for one online problem instance.
pub struct ConsensusAdmm<'a> {
    ctx: OcpContext<'a>,
    coordinates: Vec<SharedCoordinate>,
    locals: Vec<LocalProblem>,
    options: AdmmOptions,
}

fn owner_coordinates(vars: &SubsystemVars, pinned: bool) -> Vec<(String, LinExpr)> {
    let mut out = Vec::new();
    for (t, x) in vars.x.iter().enumerate().skip(1) {
        for (r, e) in x.entries().iter().enumerate() {
            out.push((format!("x[{t}][{r}]"), e.clone()));
        }
    }
    out.push(("a".to_string(), vars.set.a.clone()));
    if !pinned {
        for (r, e) in vars.set.c.entries().iter().enumerate() {
            out.push((format!("c[{r}]"), e.clone()));
        }
    }
    out
}

impl<'a> ConsensusAdmm<'a> {
    pub fn new(
        scheme: Scheme,
        x0: &DVector<f64>,
        horizon: usize,
        ingredients: &'a TerminalIngredients,
        system: &'a DistributedSystem,
        options: &AdmmOptions,
    ) -> Result<Self> {
        let ocp_options = OcpOptions {
            pin_center: options.pin_center,
            solver: options.solver,
        };
        let ctx = OcpContext::new(scheme, horizon, ingredients, system, &ocp_options)?;
        let x0_parts = ctx.split_initial_state(x0)?;
        let count = system.count();
        let topo = system.topology();

        // canonical coordinate list per owner, kept only when shared
        let mut index_of: Vec<Vec<Option<usize>>> = Vec::with_capacity(count);
        let mut coordinates = Vec::new();
        for (j, part) in x0_parts.iter().enumerate() {
            let holders = topo.dependents(j);
            let mut scratch = SdpProblem::new();
            let probe = SubsystemVars::new(&mut scratch, "", part, horizon, None, ctx.pinned);
            let names = owner_coordinates(&probe, ctx.pinned);
            let mut idx = Vec::with_capacity(names.len());
            for (name, _) in names {
                if holders.len() >= 2 {
                    idx.push(Some(coordinates.len()));
                    coordinates.push(SharedCoordinate {
                        owner: j,
                        name,
                        holders: holders.clone(),
                    });
                } else {
                    idx.push(None);
                }
            }
            index_of.push(idx);
        }

        let mut locals = Vec::with_capacity(count);
        for i in 0..count {
            let mut base = SdpProblem::new();
            let mut vars: Vec<Option<SubsystemVars>> = vec![None; count];
            for &j in topo.neighbors(i) {
                let inputs = (j == i).then(|| system.maps.input_dim(j));
                let label = format!("{}@{}", j + 1, i + 1);
                vars[j] = Some(SubsystemVars::new(
                    &mut base,
                    &label,
                    &x0_parts[j],
                    horizon,
                    inputs,
                    ctx.pinned,
                ));
            }
            let (cost, multipliers) = ctx.add_subsystem_block(&mut base, i, &vars)?;
            base.add_objective(&cost)?;
            let mut shared = Vec::new();
            for &j in topo.neighbors(i) {
                let coords = owner_coordinates(vars[j].as_ref().expect("neighbor present"), ctx.pinned);
                for ((_, e), k) in coords.into_iter().zip(&index_of[j]) {
                    if let Some(k) = k {
                        shared.push((*k, e));
                    }
                }
            }
            let own = vars[i].take().expect("own variables present");
            locals.push(LocalProblem {
                base,
                own,
                multipliers,
                shared,
            });
        }
        Ok(Self {
            ctx,
            coordinates,
            locals,
            options: *options,
        })
    }

    pub fn coordinates(&self) -> &[SharedCoordinate] {
        &self.coordinates
    }

    /// Global coordinate indices held by subsystem `i`.
    pub fn held_by(&self, i: usize) -> Vec<usize> {
        self.locals[i].shared.iter().map(|(k, _)| *k).collect()
    }

    pub fn initial_state(&self) -> ConsensusState {
        let zeros: Vec<Vec<f64>> = self.locals.iter().map(|l| vec![0.0; l.shared.len()]).collect();
        ConsensusState {
            local: zeros.clone(),
            duals: zeros,
            z: vec![0.0; self.coordinates.len()],
            z_prev: vec![0.0; self.coordinates.len()],
            penalty: self.options.penalty,
            history: Vec::new(),
        }
    }

    /// Solves the augmented local problem of subsystem `i` against the current
    /// consensus values and duals.
    pub fn local_step(&self, i: usize, state: &ConsensusState) -> Result<LocalResult> {
        let local = &self.locals[i];
        let mut problem = local.base.clone();
        let rho = state.penalty;
        for (slot, (k, e)) in local.shared.iter().enumerate() {
            let target = state.z[*k] - state.duals[i][slot];
            let diff = e - &LinExpr::constant(target);
            let mut term = QuadExpr::default();
            term.add_scaled(&diff.product(&diff), 0.5 * rho);
            problem.add_objective(&term)?;
        }
        let result = solve(&problem, &self.options.solver)?;
        if result.status != SolveStatus::Optimal {
            return Ok(LocalResult {
                status: result.status,
                shared: Vec::new(),
                x: Vec::new(),
                u: Vec::new(),
                set: TerminalSet::centered(0, 0.0),
                multipliers: Default::default(),
            });
        }
        let asg: &Assignment = &result.assignment;
        let shared = local
            .shared
            .iter()
            .map(|(_, e)| e.eval(asg))
            .collect::<Result<Vec<_>>>()?;
        let own = &local.own;
        Ok(LocalResult {
            status: SolveStatus::Optimal,
            shared,
            x: own.x.iter().map(|e| e.eval_vector(asg)).collect::<Result<_>>()?,
            u: own.u.iter().map(|e| e.eval_vector(asg)).collect::<Result<_>>()?,
            set: TerminalSet {
                c: own.set.c.eval_vector(asg)?,
                a: own.set.a.eval(asg)?.max(0.0),
            },
            multipliers: eval_multipliers(&local.multipliers, asg)?,
        })
    }

    /// `(primal, dual)`: largest copy-to-consensus gap and `ρ` times the
    /// largest consensus change.
    pub fn residuals(&self, state: &ConsensusState) -> (f64, f64) {
        let mut primal = 0.0_f64;
        for (i, local) in self.locals.iter().enumerate() {
            for (slot, (k, _)) in local.shared.iter().enumerate() {
                primal = primal.max((state.local[i][slot] - state.z[*k]).abs());
            }
        }
        let dual = state
            .z
            .iter()
            .zip(&state.z_prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            * state.penalty;
        (primal, dual)
    }

    /// Runs rounds until both residuals are within tolerance.
    pub fn run(&self) -> Result<AdmmReport> {
        let mut state = self.initial_state();
        self.run_from(&mut state)
    }

    pub fn run_from(&self, state: &mut ConsensusState) -> Result<AdmmReport> {
        let count = self.locals.len();
        let mut messages = Vec::new();
        let mut last: Vec<LocalResult> = Vec::new();
        for iteration in 1..=self.options.max_iter {
            let results = (0..count)
                .into_par_iter()
                .map(|i| self.local_step(i, state))
                .collect::<Result<Vec<_>>>()?;
            if let Some((i, r)) = results
                .iter()
                .enumerate()
                .find(|(_, r)| r.status != SolveStatus::Optimal)
            {
                let status = if r.status == SolveStatus::Infeasible {
                    AdmmStatus::Infeasible
                } else {
                    AdmmStatus::NumericalFailure
                };
                return Ok(AdmmReport {
                    status,
                    solution: None,
                    iterations: iteration,
                    history: state.history.clone(),
                    disagreement: f64::NAN,
                    messages,
                    failed_subsystem: Some(i),
                });
            }
            for (i, r) in results.iter().enumerate() {
                state.local[i].clone_from(&r.shared);
            }
            if self.options.record_messages {
                messages.extend(self.holder_messages(iteration, state));
            }
            self.consensus_update(state);
            if self.options.record_messages {
                messages.extend(self.owner_messages(iteration, state));
            }
            let (primal, dual) = self.residuals(state);
            state.history.push((primal, dual));
            last = results;
            if primal <= self.options.eps_primal && dual <= self.options.eps_dual {
                let solution = self.assemble(&last);
                return Ok(AdmmReport {
                    status: AdmmStatus::Converged,
                    solution: Some(solution),
                    iterations: iteration,
                    history: state.history.clone(),
                    disagreement: primal,
                    messages,
                    failed_subsystem: None,
                });
            }
        }
        let disagreement = state.history.last().map_or(f64::NAN, |h| h.0);
        Ok(AdmmReport {
            status: AdmmStatus::NoConvergence,
            solution: (!last.is_empty()).then(|| self.assemble(&last)),
            iterations: self.options.max_iter,
            history: state.history.clone(),
            disagreement,
            messages,
            failed_subsystem: None,
        })
    }

    fn consensus_update(&self, state: &mut ConsensusState) {
        let mut sum = vec![0.0; self.coordinates.len()];
        let mut n = vec![0usize; self.coordinates.len()];
        for (i, local) in self.locals.iter().enumerate() {
            for (slot, (k, _)) in local.shared.iter().enumerate() {
                sum[*k] += state.local[i][slot] + state.duals[i][slot];
                n[*k] += 1;
            }
        }
        state.z_prev = std::mem::take(&mut state.z);
        state.z = sum.iter().zip(&n).map(|(s, &c)| s / c as f64).collect();
        for (i, local) in self.locals.iter().enumerate() {
            for (slot, (k, _)) in local.shared.iter().enumerate() {
                state.duals[i][slot] += state.local[i][slot] - state.z[*k];
            }
        }
    }

    fn holder_messages(&self, iteration: usize, state: &ConsensusState) -> Vec<AdmmMessage> {
        let mut out = Vec::new();
        for (i, local) in self.locals.iter().enumerate() {
            for &j in self.ctx.system.neighbors(i) {
                let mut names = Vec::new();
                let mut values = Vec::new();
                for (slot, (k, _)) in local.shared.iter().enumerate() {
                    if self.coordinates[*k].owner == j {
                        names.push(self.coordinates[*k].name.clone());
                        values.push(state.local[i][slot]);
                    }
                }
                if j != i && !names.is_empty() {
                    out.push(AdmmMessage {
                        iteration,
                        kind: MessageKind::LocalValues,
                        from: i + 1,
                        to: j + 1,
                        names,
                        values,
                    });
                }
            }
        }
        out
    }

    fn owner_messages(&self, iteration: usize, state: &ConsensusState) -> Vec<AdmmMessage> {
        let mut out = Vec::new();
        for j in 0..self.locals.len() {
            let mine: Vec<usize> = (0..self.coordinates.len())
                .filter(|&k| self.coordinates[k].owner == j)
                .collect();
            if mine.is_empty() {
                continue;
            }
            for &i in &self.coordinates[mine[0]].holders {
                if i == j {
                    continue;
                }
                out.push(AdmmMessage {
                    iteration,
                    kind: MessageKind::Consensus,
                    from: j + 1,
                    to: i + 1,
                    names: mine.iter().map(|&k| self.coordinates[k].name.clone()).collect(),
                    values: mine.iter().map(|&k| state.z[k]).collect(),
                });
            }
        }
        out
    }

    fn assemble(&self, results: &[LocalResult]) -> OcpSolution {
        let x: Vec<_> = results.iter().map(|r| r.x.clone()).collect();
        let u: Vec<_> = results.iter().map(|r| r.u.clone()).collect();
        let objective = evaluate_cost(&x, &u, self.ctx.system, self.ctx.ingredients);
        OcpSolution {
            scheme: self.ctx.scheme,
            horizon: self.ctx.horizon,
            x,
            u,
            sets: results.iter().map(|r| r.set.clone()).collect(),
            multipliers: results.iter().map(|r| r.multipliers.clone()).collect(),
            objective,
        }
    }
}

/// Convenience wrapper: builds and runs the consensus iteration.
pub fn run_consensus(
    scheme: Scheme,
    x0: &DVector<f64>,
    horizon: usize,
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
    options: &AdmmOptions,
) -> Result<AdmmReport> {
    if options.penalty <= 0.0 {
        return Err(Error::NumericalFailure("ADMM penalty must be positive".into()));
    }
    ConsensusAdmm::new(scheme, x0, horizon, ingredients, system, options)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SubsystemModel, Topology};
    use crate::ocp::{solve_ocp, OcpOptions};
    use crate::scenario::benchmark_system;
    use nalgebra::{dmatrix, dvector};

    fn scalar_system() -> DistributedSystem {
        let model = SubsystemModel {
            a: dmatrix![1.2],
            b: dmatrix![1.0],
            state_rows: dmatrix![1.0; -1.0],
            state_rhs: dvector![5.0, 5.0],
            input_rows: dmatrix![1.0; -1.0],
            input_rhs: dvector![1.0, 1.0],
            q: dmatrix![1.0],
            r: dmatrix![1.0],
        };
        DistributedSystem::new(vec![model], Topology::new(vec![vec![0]]).unwrap()).unwrap()
    }

    fn benchmark_ingredients(sys: &DistributedSystem) -> TerminalIngredients {
        crate::offline::synthesize(sys, &Default::default()).unwrap().ingredients
    }

    #[test]
    fn single_subsystem_converges_in_one_round() {
        let sys = scalar_system();
        let ing = crate::offline::synthesize(&sys, &Default::default()).unwrap().ingredients;
        let x0 = dvector![1.0];
        let rep = run_consensus(Scheme::Rlxd, &x0, 2, &ing, &sys, &AdmmOptions::default()).unwrap();
        assert_eq!(rep.status, AdmmStatus::Converged);
        assert_eq!(rep.iterations, 1);
        let central = solve_ocp(Scheme::Rlxd, &x0, 2, &ing, &sys, &OcpOptions::default()).unwrap();
        let j = central.objective().unwrap();
        assert!((rep.solution.unwrap().objective - j).abs() <= 1e-7 * j.max(1.0));
    }

    #[test]
    fn chain_shares_exactly_the_neighborhood_overlap() {
        let model = |hood: usize| SubsystemModel {
            a: DMatrix::from_element(1, hood, 0.3),
            b: dmatrix![1.0],
            state_rows: DMatrix::from_fn(2, hood, |r, c| if c == 0 { if r == 0 { 1.0 } else { -1.0 } } else { 0.0 }),
            state_rhs: dvector![1.0, 1.0],
            input_rows: dmatrix![1.0; -1.0],
            input_rhs: dvector![1.0, 1.0],
            q: DMatrix::identity(hood, hood),
            r: dmatrix![1.0],
        };
        use nalgebra::DMatrix;
        let topo = Topology::new(vec![vec![0, 1], vec![0, 1, 2], vec![1, 2]]).unwrap();
        let sys = DistributedSystem::new(vec![model(2), model(3), model(2)], topo).unwrap();
        let ing = TerminalIngredients {
            p: vec![dmatrix![1.0]; 3],
            k: vec![DMatrix::zeros(1, 2), DMatrix::zeros(1, 3), DMatrix::zeros(1, 2)],
        };
        let admm = ConsensusAdmm::new(Scheme::Asym, &dvector![0.0, 0.0, 0.0], 1, &ing, &sys, &AdmmOptions::default())
            .unwrap();
        for (j, _) in sys.models.iter().enumerate() {
            // holders of j: every i whose W_Ni selects a coordinate of j
            let col = sys.maps.state_offset(j);
            let expected: Vec<usize> = (0..3).filter(|&i| sys.maps.w[i].column(col).amax() > 0.0).collect();
            for c in admm.coordinates().iter().filter(|c| c.owner == j) {
                assert_eq!(c.holders, expected);
            }
        }
        // x(1), a, c per owner
        assert_eq!(admm.coordinates().len(), 3 * 3);
        assert_eq!(admm.held_by(0).len(), 6);
        assert_eq!(admm.held_by(1).len(), 9);
    }

    #[test]
    fn benchmark_matches_central_and_is_deterministic() {
        let sys = benchmark_system();
        let ing = benchmark_ingredients(&sys);
        let x0 = dvector![-0.1, -0.4];
        let opts = AdmmOptions {
            record_messages: true,
            ..AdmmOptions::default()
        };
        let a = run_consensus(Scheme::Asym, &x0, 2, &ing, &sys, &opts).unwrap();
        let b = run_consensus(Scheme::Asym, &x0, 2, &ing, &sys, &opts).unwrap();
        assert_eq!(a.status, AdmmStatus::Converged);
        assert_eq!(a.history, b.history);
        assert_eq!(a.messages, b.messages);
        let central = solve_ocp(Scheme::Asym, &x0, 2, &ing, &sys, &OcpOptions::default())
            .unwrap()
            .objective()
            .unwrap();
        let j = a.solution.as_ref().unwrap().objective;
        assert!((j - central).abs() / central <= 1e-3, "{j} vs {central}");
        assert!(a.disagreement <= 1e-4);
        assert!(a.messages.iter().all(|m| m.from != m.to));
    }

    #[test]
    fn residuals_start_positive_and_shrink() {
        let sys = benchmark_system();
        let ing = benchmark_ingredients(&sys);
        let admm = ConsensusAdmm::new(Scheme::Rlxd, &dvector![-0.6, -0.6], 2, &ing, &sys, &AdmmOptions::default())
            .unwrap();
        let mut state = admm.initial_state();
        state.local[0][0] = 1.0;
        assert!(admm.residuals(&state).0 > 0.0);
        let rep = admm.run().unwrap();
        assert_eq!(rep.status, AdmmStatus::Converged);
        let first = rep.history[0].0;
        let second = rep.history[1].0;
        assert!(second <= first, "{second} > {first}");
        let (p, d) = *rep.history.last().unwrap();
        assert!(p <= 1e-4 && d <= 1e-4);
    }

    #[test]
    fn converged_state_is_a_fixed_point() {
        let sys = benchmark_system();
        let ing = benchmark_ingredients(&sys);
        let admm = ConsensusAdmm::new(Scheme::Asym, &dvector![-0.1, -0.4], 2, &ing, &sys, &AdmmOptions::default())
            .unwrap();
        let mut state = admm.initial_state();
        admm.run_from(&mut state).unwrap();
        for i in 0..2 {
            let r = admm.local_step(i, &state).unwrap();
            for (slot, v) in r.shared.iter().enumerate() {
                assert!((v - state.local[i][slot]).abs() < 1e-3);
            }
        }
    }
}

//! Online optimal control problems with adaptive terminal sets.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::to_rows;
use crate::model::DistributedSystem;
use crate::offline::TerminalIngredients;
use crate::sdp::{
    solve, ExprMatrix, LinExpr, QuadExpr, SdpProblem, SolveResult, SolveStatus, SolverOptions,
};
use crate::terminal::{
    input_row_lmi_linear, input_row_lmi_quadratic, invariance_lmi, invariance_lmi_centered,
    membership_lmi, membership_lmi_centered, new_multipliers, state_row_lmi_linear,
    state_row_lmi_quadratic, NeighborhoodSets, SetVars, TerminalSet,
};

/// Terminal-set scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Origin-centered sets, squared row certificates.
    Adap,
    /// Free centers, squared row certificates.
    Asym,
    /// Free centers, linear row certificates.
    Rlxd,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Adap, Scheme::Asym, Scheme::Rlxd];

    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Adap => "adap",
            Scheme::Asym => "asym",
            Scheme::Rlxd => "rlxd",
        }
    }

    pub fn free_center(self) -> bool {
        self != Scheme::Adap
    }

    pub fn linear_rows(self) -> bool {
        self == Scheme::Rlxd
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Adap => "D-ADAP",
            Scheme::Asym => "D-ASYM",
            Scheme::Rlxd => "D-RLXD",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().trim_start_matches("d-") {
            "adap" => Ok(Scheme::Adap),
            "asym" => Ok(Scheme::Asym),
            "rlxd" => Ok(Scheme::Rlxd),
            other => Err(Error::InvalidTopology(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OcpOptions {
    /// Forces `c_i = 0` for the free-center schemes.
    pub pin_center: bool,
    pub solver: SolverOptions,
}

/// Decision variables of one subsystem (or of a local copy of it).
#[derive(Debug, Clone)]
pub struct SubsystemVars {
    /// `x(t)`, `t = 0..=T`; `x(0)` is constant.
    pub x: Vec<ExprMatrix>,
    /// `u(t)`, `t < T`; empty for copies held by other subsystems.
    pub u: Vec<ExprMatrix>,
    pub set: SetVars,
}

impl SubsystemVars {
    pub fn new(
        p: &mut SdpProblem,
        label: &str,
        x0: &DVector<f64>,
        horizon: usize,
        input_dim: Option<usize>,
        pinned: bool,
    ) -> Self {
        let n = x0.len();
        let mut x = vec![ExprMatrix::constant(&DMatrix::from_column_slice(n, 1, x0.as_slice()))];
        for t in 1..=horizon {
            x.push(ExprMatrix::new_variable(p, &format!("x{label}({t})"), n, 1));
        }
        let u = match input_dim {
            Some(m) => (0..horizon)
                .map(|t| ExprMatrix::new_variable(p, &format!("u{label}({t})"), m, 1))
                .collect(),
            None => Vec::new(),
        };
        let set = SetVars::new(p, label, n, pinned);
        Self { x, u, set }
    }
}

/// Multiplier handles of one subsystem, one entry per neighbor.
#[derive(Debug, Clone, Default)]
pub struct MultiplierVars {
    pub invariance: Vec<LinExpr>,
    pub state_rows: Vec<Vec<LinExpr>>,
    pub input_rows: Vec<Vec<LinExpr>>,
}

/// Numeric S-procedure multipliers of one subsystem.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Multipliers {
    pub invariance: Vec<f64>,
    pub state_rows: Vec<Vec<f64>>,
    pub input_rows: Vec<Vec<f64>>,
}

/// Shared context for assembling subsystem blocks.
#[derive(Debug, Clone)]
pub struct OcpContext<'a> {
    pub scheme: Scheme,
    pub horizon: usize,
    pub ingredients: &'a TerminalIngredients,
    pub system: &'a DistributedSystem,
    pub pinned: bool,
    p_inv: Vec<DMatrix<f64>>,
}

impl<'a> OcpContext<'a> {
    pub fn new(
        scheme: Scheme,
        horizon: usize,
        ingredients: &'a TerminalIngredients,
        system: &'a DistributedSystem,
        options: &OcpOptions,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Dimension {
                context: "horizon".into(),
                expected: "at least 1".into(),
                found: "0".into(),
            });
        }
        ingredients.validate(system)?;
        if !scheme.linear_rows() {
            for (i, model) in system.models.iter().enumerate() {
                model.check_origin_interior(i)?;
            }
        }
        let p_inv = ingredients
            .p
            .iter()
            .map(|p| {
                p.clone()
                    .try_inverse()
                    .map(|m| crate::linalg::symmetrize(&m))
                    .ok_or_else(|| Error::NumericalFailure("singular terminal cost".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scheme,
            horizon,
            ingredients,
            system,
            pinned: !scheme.free_center() || options.pin_center,
            p_inv,
        })
    }

    /// Checks `x0` and splits it per subsystem.
    pub fn split_initial_state(&self, x0: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let n = self.system.maps.global_state_dim();
        if x0.len() != n {
            return Err(Error::Dimension {
                context: "initial state".into(),
                expected: n.to_string(),
                found: x0.len().to_string(),
            });
        }
        Ok(self.system.maps.split_state(x0))
    }

    /// Adds the dynamics, stage constraints and terminal certificates of
    /// subsystem `i`, reading variables of `j ∈ N_i` from `vars`, and returns
    /// its cost `J_i`.
    pub fn add_subsystem_block(
        &self,
        p: &mut SdpProblem,
        i: usize,
        vars: &[Option<SubsystemVars>],
    ) -> Result<(QuadExpr, MultiplierVars)> {
        let model = &self.system.models[i];
        let hood = self.system.neighbors(i);
        let get = |j: usize| -> Result<&SubsystemVars> {
            vars.get(j)
                .and_then(Option::as_ref)
                .ok_or_else(|| Error::InvalidTopology(format!("missing variables of subsystem {}", j + 1)))
        };
        let own = get(i)?;
        if own.u.len() != self.horizon {
            return Err(Error::InvalidTopology(format!("subsystem {} has no input variables", i + 1)));
        }
        let stacked = |t: usize| -> Result<ExprMatrix> {
            let parts = hood
                .iter()
                .map(|&j| get(j).map(|v| v.x[t].clone()))
                .collect::<Result<Vec<_>>>()?;
            Ok(ExprMatrix::vstack(&parts))
        };

        let mut cost = QuadExpr::default();
        for t in 0..=self.horizon {
            let x_hood = stacked(t)?;
            for e in x_hood.left_mul(&model.state_rows).entries().iter().zip(model.state_rhs.iter()) {
                p.add_le(e.0, &LinExpr::constant(*e.1))?;
            }
            if t == self.horizon {
                break;
            }
            let u = &own.u[t];
            for e in u.left_mul(&model.input_rows).entries().iter().zip(model.input_rhs.iter()) {
                p.add_le(e.0, &LinExpr::constant(*e.1))?;
            }
            let next = &x_hood.left_mul(&model.a) + &u.left_mul(&model.b);
            for (lhs, rhs) in own.x[t + 1].entries().iter().zip(next.entries()) {
                p.add_equality(lhs, rhs)?;
            }
            cost.add_scaled(&QuadExpr::quadratic_form(x_hood.entries(), &model.q, 1.0), 1.0);
            cost.add_scaled(&QuadExpr::quadratic_form(u.entries(), &model.r, 1.0), 1.0);
        }
        let x_end = &own.x[self.horizon];
        cost.add_scaled(&QuadExpr::quadratic_form(x_end.entries(), &self.ingredients.p[i], 1.0), 1.0);

        let set_refs: Vec<Option<&SetVars>> = vars.iter().map(|v| v.as_ref().map(|v| &v.set)).collect();
        let sets = NeighborhoodSets::gather(i, &set_refs, &self.ingredients.p, &self.system.maps)?;
        let centered = self.scheme == Scheme::Adap;
        let p_inv = &self.p_inv[i];
        let k_gain = &self.ingredients.k[i];
        let phi = self.ingredients.closed_loop_block(i, model);
        let tag = i + 1;

        if centered {
            p.add_psd(membership_lmi_centered(x_end, &own.set.a, p_inv))?;
        } else {
            p.add_psd(membership_lmi(x_end, &own.set, p_inv))?;
        }
        let mut mult = MultiplierVars {
            invariance: new_multipliers(p, &format!("lambda{tag}"), hood.len()),
            ..MultiplierVars::default()
        };
        let inv = if centered {
            invariance_lmi_centered(&phi, p_inv, &own.set.a, &sets, &mult.invariance)?
        } else {
            invariance_lmi(&phi, p_inv, &own.set, &sets, &mult.invariance)?
        };
        p.add_psd(inv)?;
        for k in 0..model.num_state_rows() {
            let m = new_multipliers(p, &format!("state{tag}.{k}"), hood.len());
            let lmi = if self.scheme.linear_rows() {
                state_row_lmi_linear(k, &model.state_rows, &model.state_rhs, &sets, &m)?
            } else {
                state_row_lmi_quadratic(i, k, &model.state_rows, &model.state_rhs, &sets, &m, centered)?
            };
            p.add_psd(lmi)?;
            mult.state_rows.push(m);
        }
        for l in 0..model.num_input_rows() {
            let m = new_multipliers(p, &format!("input{tag}.{l}"), hood.len());
            let lmi = if self.scheme.linear_rows() {
                input_row_lmi_linear(l, &model.input_rows, &model.input_rhs, k_gain, &sets, &m)?
            } else {
                input_row_lmi_quadratic(
                    i,
                    l,
                    &model.input_rows,
                    &model.input_rhs,
                    k_gain,
                    &sets,
                    &m,
                    centered,
                )?
            };
            p.add_psd(lmi)?;
            mult.input_rows.push(m);
        }
        Ok((cost, mult))
    }
}

/// Centralized OCP with variable handles.
#[derive(Debug, Clone)]
pub struct OcpProblem {
    pub problem: SdpProblem,
    pub vars: Vec<SubsystemVars>,
    pub multipliers: Vec<MultiplierVars>,
    pub scheme: Scheme,
    pub horizon: usize,
}

pub fn build_ocp(
    scheme: Scheme,
    x0: &DVector<f64>,
    horizon: usize,
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
    options: &OcpOptions,
) -> Result<OcpProblem> {
    let ctx = OcpContext::new(scheme, horizon, ingredients, system, options)?;
    let x0_parts = ctx.split_initial_state(x0)?;
    let mut problem = SdpProblem::new();
    let vars: Vec<Option<SubsystemVars>> = x0_parts
        .iter()
        .enumerate()
        .map(|(j, x0j)| {
            Some(SubsystemVars::new(
                &mut problem,
                &(j + 1).to_string(),
                x0j,
                horizon,
                Some(system.maps.input_dim(j)),
                ctx.pinned,
            ))
        })
        .collect();
    let mut multipliers = Vec::with_capacity(vars.len());
    for i in 0..system.count() {
        let (cost, mult) = ctx.add_subsystem_block(&mut problem, i, &vars)?;
        problem.add_objective(&cost)?;
        multipliers.push(mult);
    }
    Ok(OcpProblem {
        problem,
        vars: vars.into_iter().map(|v| v.expect("all subsystems present")).collect(),
        multipliers,
        scheme,
        horizon,
    })
}

/// Optimal trajectories and terminal sets.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub scheme: Scheme,
    pub horizon: usize,
    /// `x[i][t]`, `t = 0..=T`.
    pub x: Vec<Vec<DVector<f64>>>,
    /// `u[i][t]`, `t < T`.
    pub u: Vec<Vec<DVector<f64>>>,
    pub sets: Vec<TerminalSet>,
    pub multipliers: Vec<Multipliers>,
    pub objective: f64,
}

impl OcpSolution {
    pub fn count(&self) -> usize {
        self.x.len()
    }

    pub fn global_state(&self, t: usize) -> DVector<f64> {
        concat(self.x.iter().map(|xi| &xi[t]))
    }

    pub fn global_input(&self, t: usize) -> DVector<f64> {
        concat(self.u.iter().map(|ui| &ui[t]))
    }

    pub fn to_json(&self, ingredients: &TerminalIngredients) -> serde_json::Value {
        let subsystems: Vec<_> = (0..self.count())
            .map(|i| {
                let vecs = |v: &[DVector<f64>]| -> Vec<Vec<f64>> {
                    v.iter().map(|x| x.iter().copied().collect()).collect()
                };
                serde_json::json!({
                    "x": vecs(&self.x[i]),
                    "u": vecs(&self.u[i]),
                    "c": self.sets[i].c.iter().copied().collect::<Vec<_>>(),
                    "a": self.sets[i].a,
                    "P": to_rows(&ingredients.p[i]),
                })
            })
            .collect();
        serde_json::json!({
            "status": SolveStatus::Optimal.to_string(),
            "scheme": self.scheme.tag(),
            "horizon": self.horizon,
            "J": self.objective,
            "subsystems": subsystems,
        })
    }
}

fn concat<'a>(parts: impl Iterator<Item = &'a DVector<f64>>) -> DVector<f64> {
    let v: Vec<f64> = parts.flat_map(|p| p.iter().copied()).collect();
    DVector::from_vec(v)
}

/// Outcome of an online solve; infeasibility is a result, not an error.
#[derive(Debug, Clone, PartialEq)]
pub enum OcpOutcome {
    Optimal(OcpSolution),
    Infeasible,
    NumericalFailure(String),
}

impl OcpOutcome {
    pub fn status(&self) -> SolveStatus {
        match self {
            OcpOutcome::Optimal(_) => SolveStatus::Optimal,
            OcpOutcome::Infeasible => SolveStatus::Infeasible,
            OcpOutcome::NumericalFailure(_) => SolveStatus::NumericalFailure,
        }
    }

    pub fn solution(&self) -> Option<&OcpSolution> {
        match self {
            OcpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn objective(&self) -> Option<f64> {
        self.solution().map(|s| s.objective)
    }

    pub fn to_json(&self, ingredients: &TerminalIngredients) -> serde_json::Value {
        match self {
            OcpOutcome::Optimal(s) => s.to_json(ingredients),
            other => serde_json::json!({ "status": other.status().to_string(), "J": null }),
        }
    }
}

impl OcpProblem {
    /// Reads trajectories, sets and multipliers from an optimal result.
    pub fn extract(&self, result: &SolveResult) -> Result<OcpSolution> {
        let asg = &result.assignment;
        let mut x = Vec::new();
        let mut u = Vec::new();
        let mut sets = Vec::new();
        for v in &self.vars {
            x.push(v.x.iter().map(|e| e.eval_vector(asg)).collect::<Result<Vec<_>>>()?);
            u.push(v.u.iter().map(|e| e.eval_vector(asg)).collect::<Result<Vec<_>>>()?);
            sets.push(TerminalSet {
                c: v.set.c.eval_vector(asg)?,
                a: v.set.a.eval(asg)?.max(0.0),
            });
        }
        let multipliers = self
            .multipliers
            .iter()
            .map(|m| eval_multipliers(m, asg))
            .collect::<Result<Vec<_>>>()?;
        Ok(OcpSolution {
            scheme: self.scheme,
            horizon: self.horizon,
            x,
            u,
            sets,
            multipliers,
            objective: result.objective,
        })
    }
}

pub(crate) fn eval_multipliers(m: &MultiplierVars, asg: &crate::sdp::Assignment) -> Result<Multipliers> {
    let row = |r: &[LinExpr]| r.iter().map(|e| e.eval(asg)).collect::<Result<Vec<_>>>();
    Ok(Multipliers {
        invariance: row(&m.invariance)?,
        state_rows: m.state_rows.iter().map(|r| row(r)).collect::<Result<_>>()?,
        input_rows: m.input_rows.iter().map(|r| row(r)).collect::<Result<_>>()?,
    })
}

pub fn solve_ocp(
    scheme: Scheme,
    x0: &DVector<f64>,
    horizon: usize,
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
    options: &OcpOptions,
) -> Result<OcpOutcome> {
    let ocp = build_ocp(scheme, x0, horizon, ingredients, system, options)?;
    let result = solve(&ocp.problem, &options.solver)?;
    Ok(match result.status {
        SolveStatus::Optimal => OcpOutcome::Optimal(ocp.extract(&result)?),
        SolveStatus::Infeasible => OcpOutcome::Infeasible,
        SolveStatus::Unbounded => OcpOutcome::NumericalFailure("unbounded online program".into()),
        SolveStatus::NumericalFailure => {
            OcpOutcome::NumericalFailure(format!("solver stopped after {} iterations", result.iterations))
        }
    })
}

/// `Σ_i [Σ_{t<T} x_Niᵀ Q_Ni x_Ni + u_iᵀ R_i u_i] + x_i(T)ᵀ P_i x_i(T)`.
pub fn evaluate_cost(
    x: &[Vec<DVector<f64>>],
    u: &[Vec<DVector<f64>>],
    system: &DistributedSystem,
    ingredients: &TerminalIngredients,
) -> f64 {
    let maps = &system.maps;
    let mut total = 0.0;
    for (i, model) in system.models.iter().enumerate() {
        let horizon = u[i].len();
        for t in 0..horizon {
            let parts: Vec<DVector<f64>> = x.iter().map(|xj| xj[t].clone()).collect();
            let x_hood = maps.gather(i, &parts);
            total += (x_hood.transpose() * &model.q * &x_hood)[0];
            total += (u[i][t].transpose() * &model.r * &u[i][t])[0];
        }
        let end = &x[i][horizon];
        total += (end.transpose() * &ingredients.p[i] * end)[0];
    }
    total
}

/// Violations of the trajectory, constraint and membership invariants of a
/// solution, at tolerance `tol`; empty when all hold.
pub fn solution_violations(
    sol: &OcpSolution,
    system: &DistributedSystem,
    ingredients: &TerminalIngredients,
    tol: f64,
) -> Vec<String> {
    let maps = &system.maps;
    let mut out = Vec::new();
    for (i, model) in system.models.iter().enumerate() {
        for t in 0..=sol.horizon {
            let parts: Vec<DVector<f64>> = sol.x.iter().map(|xj| xj[t].clone()).collect();
            let x_hood = maps.gather(i, &parts);
            let slack = &model.state_rhs - &model.state_rows * &x_hood;
            if slack.min() < -tol {
                out.push(format!("subsystem {} state rows at t={t}: {:.3e}", i + 1, slack.min()));
            }
            if t == sol.horizon {
                break;
            }
            let u = &sol.u[i][t];
            let slack = &model.input_rhs - &model.input_rows * u;
            if slack.min() < -tol {
                out.push(format!("subsystem {} input rows at t={t}: {:.3e}", i + 1, slack.min()));
            }
            let next = &model.a * &x_hood + &model.b * u;
            let err = (&next - &sol.x[i][t + 1]).amax();
            if err > tol {
                out.push(format!("subsystem {} dynamics at t={t}: {err:.3e}", i + 1));
            }
        }
        if !crate::terminal::check_membership(&sol.x[i][sol.horizon], &sol.sets[i], &ingredients.p[i], tol) {
            out.push(format!("subsystem {} terminal state outside its set", i + 1));
        }
        if sol.sets[i].a < 0.0 {
            out.push(format!("subsystem {} negative set size", i + 1));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SubsystemModel, Topology};
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_system() -> DistributedSystem {
        let model = SubsystemModel {
            a: dmatrix![1.0],
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

    fn scalar_ingredients() -> TerminalIngredients {
        TerminalIngredients {
            p: vec![dmatrix![2.0]],
            k: vec![dmatrix![-0.5]],
        }
    }

    #[test]
    fn hand_evaluated_cost() {
        let sys = scalar_system();
        let x = vec![vec![dvector![1.0], dvector![0.5]]];
        let u = vec![vec![dvector![1.0]]];
        assert_relative_eq!(evaluate_cost(&x, &u, &sys, &scalar_ingredients()), 2.5);
        let zx = vec![vec![dvector![0.0], dvector![0.0]]];
        let zu = vec![vec![dvector![0.0]]];
        assert_eq!(evaluate_cost(&zx, &zu, &sys, &scalar_ingredients()), 0.0);
    }

    #[test]
    fn origin_is_optimal_at_zero_cost() {
        let sys = scalar_system();
        for scheme in Scheme::ALL {
            let out = solve_ocp(scheme, &dvector![0.0], 2, &scalar_ingredients(), &sys, &OcpOptions::default())
                .unwrap();
            let sol = out.solution().expect("feasible");
            assert!(sol.objective.abs() < 1e-7, "{scheme}: {}", sol.objective);
            assert!(sol.u[0].iter().all(|u| u.amax() < 1e-4));
        }
    }

    #[test]
    fn solver_objective_matches_evaluated_cost() {
        let sys = scalar_system();
        let ing = scalar_ingredients();
        for scheme in Scheme::ALL {
            let out = solve_ocp(scheme, &dvector![1.5], 3, &ing, &sys, &OcpOptions::default()).unwrap();
            let sol = out.solution().expect("feasible");
            let direct = evaluate_cost(&sol.x, &sol.u, &sys, &ing);
            assert!((direct - sol.objective).abs() < 1e-5, "{scheme}");
            assert!(solution_violations(sol, &sys, &ing, 1e-6).is_empty());
        }
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("rlxd".parse::<Scheme>().unwrap(), Scheme::Rlxd);
        assert_eq!("D-ASYM".parse::<Scheme>().unwrap(), Scheme::Asym);
        assert!("other".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Adap.to_string(), "D-ADAP");
    }

    #[test]
    fn rejects_bad_horizon_and_state() {
        let sys = scalar_system();
        let ing = scalar_ingredients();
        assert!(build_ocp(Scheme::Asym, &dvector![0.0], 0, &ing, &sys, &OcpOptions::default()).is_err());
        assert!(build_ocp(Scheme::Asym, &dvector![0.0, 1.0], 2, &ing, &sys, &OcpOptions::default()).is_err());
    }

    #[test]
    fn quadratic_schemes_reject_nonpositive_bounds() {
        let mut sys = scalar_system();
        sys.models[0].input_rhs = dvector![1.0, 0.0];
        let ing = scalar_ingredients();
        let opts = OcpOptions::default();
        let err = build_ocp(Scheme::Asym, &dvector![0.0], 2, &ing, &sys, &opts).unwrap_err();
        assert!(matches!(err, Error::NonPositiveBound { .. }));
        assert!(build_ocp(Scheme::Rlxd, &dvector![0.0], 2, &ing, &sys, &opts).is_ok());
    }

    #[test]
    fn infeasible_initial_state() {
        let sys = scalar_system();
        let out = solve_ocp(Scheme::Rlxd, &dvector![6.0], 2, &scalar_ingredients(), &sys, &OcpOptions::default())
            .unwrap();
        assert_eq!(out, OcpOutcome::Infeasible);
    }
}

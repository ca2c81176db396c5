//! Offline synthesis of the structured terminal cost `P = blockdiag(P_i)` and
//! the distributed terminal gains `K_Ni`.
//!
//! With `E_i = P_i⁻¹`, `E_Ni = blockdiag(E_j : j ∈ N_i)` and `Y_i = K_Ni E_Ni`,
//! the program maximizes `Σ tr(E_i)` subject to, for every subsystem,
//!
//! ```text
//! ⎡ T_iᵀE_iT_i + Z_i   (A_Ni E_Ni + B_i Y_i)ᵀ   E_Ni Q_Ni^½   Y_iᵀ R_i^½ ⎤
//! ⎢ A_Ni E_Ni + B_i Y_i        E_i                  0             0     ⎥ ⪰ 0
//! ⎢ Q_Ni^½ E_Ni                0                    I             0     ⎥
//! ⎣ R_i^½ Y_i                  0                    0             I     ⎦
//! ```
//!
//! where `T_i = U_i W_Niᵀ` and the relaxation matrices `Z_i` are coupled by
//! `Σ_i W_Niᵀ Z_i W_Ni ⪯ 0`. Summing the Schur complements over `i` yields
//! `A_clᵀ P A_cl − P + Q + KᵀRK ⪯ 0` for the assembled closed loop.

use std::time::Duration;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    condition_number, from_rows, max_eigenvalue, min_eigenvalue, psd_sqrt, spectral_radius,
    to_rows,
};
use crate::model::{lift_block_diagonal, DistributedSystem, SelectionMaps, SubsystemModel};
use crate::sdp::{solve, AffineMatrixExpr, ExprMatrix, SdpProblem, SolveResult, SolveStatus, SolverOptions};

/// Largest admissible condition number of a recovered `E_i`.
pub const MAX_CONDITION: f64 = 1e10;

/// Threshold on the largest eigenvalue of the decrease matrix.
pub const LYAPUNOV_TOL: f64 = 1e-7;

/// Terminal cost blocks and terminal gains.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalIngredients {
    /// `P_i`, `n_i × n_i`.
    pub p: Vec<DMatrix<f64>>,
    /// `K_Ni`, `m_i × n_Ni`.
    pub k: Vec<DMatrix<f64>>,
}

impl TerminalIngredients {
    pub fn count(&self) -> usize {
        self.p.len()
    }

    /// `blockdiag(P_i)`.
    pub fn global_p(&self) -> DMatrix<f64> {
        crate::linalg::block_diagonal(&self.p)
    }

    /// `K = Σ_i V_iᵀ K_Ni W_Ni`, so that `u = K x`.
    pub fn global_k(&self, maps: &SelectionMaps) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(maps.global_input_dim(), maps.global_state_dim());
        for i in 0..self.count() {
            k += maps.v[i].transpose() * &self.k[i] * &maps.w[i];
        }
        k
    }

    /// `A_Ni + B_i K_Ni`, the neighborhood-to-local terminal dynamics.
    pub fn closed_loop_block(&self, i: usize, model: &SubsystemModel) -> DMatrix<f64> {
        &model.a + &model.b * &self.k[i]
    }

    /// Checks shapes against the system and positive definiteness of `P_i`.
    pub fn validate(&self, system: &DistributedSystem) -> Result<()> {
        let maps = &system.maps;
        if self.p.len() != maps.count() || self.k.len() != maps.count() {
            return Err(Error::Dimension {
                context: "terminal ingredients".into(),
                expected: format!("{} subsystems", maps.count()),
                found: format!("{} P and {} K blocks", self.p.len(), self.k.len()),
            });
        }
        for i in 0..maps.count() {
            let n = maps.state_dim(i);
            if self.p[i].shape() != (n, n) {
                return Err(Error::Dimension {
                    context: format!("P_{}", i + 1),
                    expected: format!("{n}x{n}"),
                    found: format!("{}x{}", self.p[i].nrows(), self.p[i].ncols()),
                });
            }
            let kshape = (maps.input_dim(i), maps.neighborhood_dim(i));
            if self.k[i].shape() != kshape {
                return Err(Error::Dimension {
                    context: format!("K_N{}", i + 1),
                    expected: format!("{}x{}", kshape.0, kshape.1),
                    found: format!("{}x{}", self.k[i].nrows(), self.k[i].ncols()),
                });
            }
            if crate::linalg::asymmetry(&self.p[i]) > 1e-9 * self.p[i].amax().max(1.0)
                || min_eigenvalue(&self.p[i]) <= 0.0
            {
                return Err(Error::InvalidSubsystem {
                    subsystem: i,
                    reason: "terminal cost block is not symmetric positive definite".into(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let file = IngredientsFile {
            subsystems: self
                .p
                .iter()
                .zip(&self.k)
                .map(|(p, k)| IngredientsEntry {
                    p: to_rows(p),
                    k: to_rows(k),
                })
                .collect(),
        };
        serde_json::to_value(file).expect("plain numeric data serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let file: IngredientsFile = serde_json::from_value(value.clone())?;
        let mut p = Vec::new();
        let mut k = Vec::new();
        for (i, e) in file.subsystems.iter().enumerate() {
            let ragged = |what: &str| Error::InvalidSubsystem {
                subsystem: i,
                reason: format!("ragged {what} matrix"),
            };
            p.push(from_rows(&e.p).ok_or_else(|| ragged("P"))?);
            k.push(from_rows(&e.k).ok_or_else(|| ragged("K"))?);
        }
        Ok(Self { p, k })
    }
}

#[derive(Serialize, Deserialize)]
struct IngredientsFile {
    subsystems: Vec<IngredientsEntry>,
}

#[derive(Serialize, Deserialize)]
struct IngredientsEntry {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfflineOptions {
    /// Lower bound `E_i ⪰ min_eig · I`; keeps `E = 0` out of the feasible set.
    pub min_eig: f64,
    pub solver: SolverOptions,
}

impl Default for OfflineOptions {
    fn default() -> Self {
        Self {
            min_eig: 1e-6,
            solver: SolverOptions::default(),
        }
    }
}

/// The assembled offline program together with handles on its matrix
/// variables.
#[derive(Debug, Clone)]
pub struct OfflineSdp {
    pub problem: SdpProblem,
    /// `E_i`, symmetric `n_i × n_i`.
    pub e: Vec<ExprMatrix>,
    /// `Y_i`, `m_i × n_Ni`.
    pub y: Vec<ExprMatrix>,
    /// Relaxation matrices `Z_i`, symmetric `n_Ni × n_Ni`.
    pub relax: Vec<ExprMatrix>,
}

pub fn build_offline_sdp(system: &DistributedSystem, options: &OfflineOptions) -> Result<OfflineSdp> {
    let maps = &system.maps;
    let count = maps.count();
    let mut problem = SdpProblem::new();
    let e: Vec<ExprMatrix> = (0..count)
        .map(|i| ExprMatrix::new_symmetric(&mut problem, &format!("E{}", i + 1), maps.state_dim(i)))
        .collect();
    let y: Vec<ExprMatrix> = (0..count)
        .map(|i| {
            ExprMatrix::new_variable(
                &mut problem,
                &format!("Y{}", i + 1),
                maps.input_dim(i),
                maps.neighborhood_dim(i),
            )
        })
        .collect();
    let relax: Vec<ExprMatrix> = (0..count)
        .map(|i| {
            ExprMatrix::new_symmetric(&mut problem, &format!("Z{}", i + 1), maps.neighborhood_dim(i))
        })
        .collect();

    for (i, model) in system.models.iter().enumerate() {
        let n_i = maps.state_dim(i);
        let m_i = maps.input_dim(i);
        let n_hood = maps.neighborhood_dim(i);
        let hood: Vec<ExprMatrix> = system.neighbors(i).iter().map(|&j| e[j].clone()).collect();
        let e_hood = ExprMatrix::block_diagonal(&hood);
        let t = &maps.u[i] * maps.w[i].transpose();

        let top = &e[i].left_mul(&t.transpose()).right_mul(&t) + &relax[i];
        let transition = &e_hood.left_mul(&model.a) + &y[i].left_mul(&model.b);
        let q_half = psd_sqrt(&model.q);
        let r_half = psd_sqrt(&model.r);

        let dim = n_hood + n_i + n_hood + m_i;
        let (o1, o2, o3) = (n_hood, n_hood + n_i, 2 * n_hood + n_i);
        let mut lmi = AffineMatrixExpr::zeros(dim);
        lmi.add_block(0, 0, &top.to_rows());
        lmi.add_block(o1, 0, &transition.to_rows());
        lmi.add_block(o1, o1, &e[i].to_rows());
        lmi.add_block(o2, 0, &e_hood.left_mul(&q_half).to_rows());
        lmi.add_constant_block(o2, o2, &DMatrix::identity(n_hood, n_hood));
        lmi.add_block(o3, 0, &y[i].left_mul(&r_half).to_rows());
        lmi.add_constant_block(o3, o3, &DMatrix::identity(m_i, m_i));
        problem.add_psd(lmi)?;

        let mut lower = AffineMatrixExpr::zeros(n_i);
        lower.add_block(0, 0, &e[i].to_rows());
        lower.add_constant_block(0, 0, &(-options.min_eig * DMatrix::identity(n_i, n_i)));
        problem.add_psd(lower)?;
    }

    // −Σ W_Niᵀ Z_i W_Ni ⪰ 0
    let n = maps.global_state_dim();
    let mut coupling = ExprMatrix::zeros(n, n);
    for (i, z) in relax.iter().enumerate() {
        coupling = &coupling - &z.left_mul(&maps.w[i].transpose()).right_mul(&maps.w[i]);
    }
    let mut coupling_lmi = AffineMatrixExpr::zeros(n);
    coupling_lmi.add_block(0, 0, &coupling.to_rows());
    problem.add_psd(coupling_lmi)?;

    let trace = crate::sdp::LinExpr::sum(e.iter().map(ExprMatrix::trace).collect::<Vec<_>>().iter());
    problem.add_linear_objective(&trace.scaled(-1.0))?;
    Ok(OfflineSdp {
        problem,
        e,
        y,
        relax,
    })
}

/// `P_i = E_i⁻¹`, `K_Ni = Y_i E_Ni⁻¹` from numeric blocks.
pub fn ingredients_from_blocks(
    e: &[DMatrix<f64>],
    y: &[DMatrix<f64>],
    maps: &SelectionMaps,
) -> Result<TerminalIngredients> {
    let mut p = Vec::with_capacity(e.len());
    for (i, ei) in e.iter().enumerate() {
        let ei = crate::linalg::symmetrize(ei);
        let cond = condition_number(&ei);
        if !cond.is_finite() || cond > MAX_CONDITION || min_eigenvalue(&ei) <= 0.0 {
            return Err(Error::IllConditioned { subsystem: i, cond });
        }
        let inv = ei
            .clone()
            .try_inverse()
            .ok_or(Error::IllConditioned { subsystem: i, cond })?;
        p.push(crate::linalg::symmetrize(&inv));
    }
    let mut k = Vec::with_capacity(y.len());
    for (i, yi) in y.iter().enumerate() {
        let e_hood = lift_block_diagonal(e, &maps.w[i])?;
        let inv = e_hood.try_inverse().ok_or(Error::IllConditioned {
            subsystem: i,
            cond: f64::INFINITY,
        })?;
        k.push(yi * inv);
    }
    Ok(TerminalIngredients { p, k })
}

pub fn recover_terminal_ingredients(
    sdp: &OfflineSdp,
    result: &SolveResult,
    maps: &SelectionMaps,
) -> Result<TerminalIngredients> {
    if result.status != SolveStatus::Optimal {
        return Err(Error::NotOptimal(format!("offline program status {}", result.status)));
    }
    let e = sdp
        .e
        .iter()
        .map(|m| m.eval(&result.assignment))
        .collect::<Result<Vec<_>>>()?;
    let y = sdp
        .y
        .iter()
        .map(|m| m.eval(&result.assignment))
        .collect::<Result<Vec<_>>>()?;
    ingredients_from_blocks(&e, &y, maps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    /// Largest eigenvalue of `A_clᵀ P A_cl − P + Q + KᵀRK`.
    pub max_eigenvalue: f64,
    /// Spectral radius of `A_cl = A + B K`.
    pub spectral_radius: f64,
    pub passed: bool,
}

pub fn verify_lyapunov_decrease(
    ingredients: &TerminalIngredients,
    system: &DistributedSystem,
) -> LyapunovReport {
    let g = &system.global;
    let p = ingredients.global_p();
    let k = ingredients.global_k(&system.maps);
    let a_cl = &g.a + &g.b * &k;
    let decrease = a_cl.transpose() * &p * &a_cl - &p + &g.q + k.transpose() * &g.r * &k;
    let max_eig = max_eigenvalue(&decrease);
    LyapunovReport {
        max_eigenvalue: max_eig,
        spectral_radius: spectral_radius(&a_cl),
        passed: max_eig <= LYAPUNOV_TOL,
    }
}

/// Result of a full offline synthesis.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub ingredients: TerminalIngredients,
    pub report: LyapunovReport,
    pub objective: f64,
    pub max_psd_residual: f64,
    pub elapsed: Duration,
}

/// Builds, solves and recovers; emits only ingredients that pass the
/// decrease check.
pub fn synthesize(system: &DistributedSystem, options: &OfflineOptions) -> Result<Synthesis> {
    let start = std::time::Instant::now();
    let sdp = build_offline_sdp(system, options)?;
    let result = solve(&sdp.problem, &options.solver)?;
    match result.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::SynthesisInfeasible),
        SolveStatus::Unbounded => {
            return Err(Error::NotOptimal("offline program is unbounded".into()))
        }
        SolveStatus::NumericalFailure => {
            return Err(Error::NumericalFailure("offline program".into()))
        }
    }
    let ingredients = recover_terminal_ingredients(&sdp, &result, &system.maps)?;
    let report = verify_lyapunov_decrease(&ingredients, system);
    if !report.passed {
        return Err(Error::LyapunovCheckFailed {
            max_eig: report.max_eigenvalue,
        });
    }
    Ok(Synthesis {
        ingredients,
        report,
        objective: -result.objective,
        max_psd_residual: result.max_psd_residual,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Topology;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar(a: f64, b: f64, q: f64, r: f64) -> DistributedSystem {
        let model = SubsystemModel {
            a: dmatrix![a],
            b: dmatrix![b],
            state_rows: dmatrix![1.0; -1.0],
            state_rhs: dvector![1.0, 1.0],
            input_rows: dmatrix![1.0; -1.0],
            input_rhs: dvector![1.0, 1.0],
            q: dmatrix![q],
            r: dmatrix![r],
        };
        DistributedSystem::new(vec![model], Topology::new(vec![vec![0]]).unwrap()).unwrap()
    }

    #[test]
    fn stable_scalar_is_feasible() {
        let sys = scalar(0.5, 1.0, 1.0, 1.0);
        let s = synthesize(&sys, &OfflineOptions::default()).unwrap();
        assert!(s.ingredients.p[0][(0, 0)] > 0.0);
        assert!(s.report.passed);
        assert!(s.report.spectral_radius < 1.0);
    }

    #[test]
    fn unstabilizable_scalar_is_infeasible() {
        let sys = scalar(2.0, 0.0, 1.0, 1.0);
        let err = synthesize(&sys, &OfflineOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SynthesisInfeasible), "{err:?}");
    }

    #[test]
    fn identity_blocks_recover_identity() {
        let sys = scalar(0.5, 1.0, 1.0, 1.0);
        let ing = ingredients_from_blocks(&[dmatrix![1.0]], &[dmatrix![0.0]], &sys.maps).unwrap();
        assert_eq!(ing.p[0], dmatrix![1.0]);
    }

    #[test]
    fn scalar_inversion() {
        let sys = scalar(0.5, 1.0, 1.0, 1.0);
        let ing = ingredients_from_blocks(&[dmatrix![4.0]], &[dmatrix![2.0]], &sys.maps).unwrap();
        assert_relative_eq!(ing.p[0][(0, 0)], 0.25);
        assert_relative_eq!(ing.k[0][(0, 0)], 0.5);
    }

    #[test]
    fn singular_block_is_rejected() {
        let sys = scalar(0.5, 1.0, 1.0, 1.0);
        let err = ingredients_from_blocks(&[dmatrix![0.0]], &[dmatrix![0.0]], &sys.maps);
        assert!(matches!(err, Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn decrease_fails_for_unstable_open_loop() {
        let sys = scalar(2.0, 1.0, 1.0, 1.0);
        let ing = TerminalIngredients {
            p: vec![dmatrix![3.0]],
            k: vec![dmatrix![0.0]],
        };
        assert!(!verify_lyapunov_decrease(&ing, &sys).passed);
    }

    #[test]
    fn analytic_lyapunov_solution_is_a_boundary_pass() {
        let sys = scalar(0.5, 0.0, 1.0, 1.0);
        let ing = TerminalIngredients {
            p: vec![dmatrix![4.0 / 3.0]],
            k: vec![dmatrix![0.0]],
        };
        let report = verify_lyapunov_decrease(&ing, &sys);
        assert!(report.max_eigenvalue.abs() < 1e-14);
        assert!(report.passed);
    }

    #[test]
    fn json_round_trip() {
        let ing = TerminalIngredients {
            p: vec![dmatrix![1.5, 0.1; 0.1, 2.0]],
            k: vec![dmatrix![-1.0, 0.25]],
        };
        let back = TerminalIngredients::from_json(&ing.to_json()).unwrap();
        assert_eq!(back, ing);
    }
}

//! Reduction of an [`SdpProblem`] to the standard cone form and the two-phase
//! solve (feasibility classification, then optimization).

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use serde::{Deserialize, Serialize};

use super::expr::{AffineMatrixExpr, Assignment, LinExpr, VarId};
use super::ipm::{solve_cone, ConeProgram, IpmOptions, IpmStatus, SdpBlock};
use super::problem::{quadratic_epigraph, SdpProblem};
use crate::error::Result;
use crate::linalg::min_eigenvalue;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
    /// Every LMI is imposed as `F(z) ⪰ psd_shift · I`.
    pub psd_shift: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            opt_tol: 1e-8,
            max_iter: 200,
            psd_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "OPTIMAL",
            SolveStatus::Infeasible => "INFEASIBLE",
            SolveStatus::Unbounded => "UNBOUNDED",
            SolveStatus::NumericalFailure => "NUMFAIL",
        };
        f.write_str(s)
    }
}

/// Why a problem was declared infeasible.
#[derive(Debug, Clone, PartialEq)]
pub enum InfeasibilityCertificate {
    /// The equality constraints have no solution; least-squares residual.
    InconsistentEqualities { residual: f64 },
    /// A constraint without free variables is violated.
    ViolatedConstant { violation: f64 },
    /// The phase-one problem `max t s.t. F(z) ⪰ t·I` converged to `t* < 0`.
    /// `dual_residual` bounds `|⟨F_j, X⟩|` for the normalized dual multiplier.
    PhaseOne { t_star: f64, dual_residual: f64 },
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub assignment: Assignment,
    pub objective: f64,
    /// `max(0, −λ_min)` over all LMIs at the returned point.
    pub max_psd_residual: f64,
    /// Largest violation of equalities, inequalities and bounds.
    pub max_linear_residual: f64,
    pub iterations: usize,
    pub certificate: Option<InfeasibilityCertificate>,
}

impl SolveResult {
    fn without_point(status: SolveStatus, certificate: Option<InfeasibilityCertificate>) -> Self {
        Self {
            status,
            assignment: Assignment::default(),
            objective: f64::NAN,
            max_psd_residual: f64::NAN,
            max_linear_residual: f64::NAN,
            iterations: 0,
            certificate,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.assignment.get(v).unwrap_or(f64::NAN)
    }

    pub fn eval(&self, e: &LinExpr) -> f64 {
        e.eval(&self.assignment).unwrap_or(f64::NAN)
    }
}

/// Affine function of the reduced variables: `constant + Σ_j v_j coef[j]`.
struct ReducedRow {
    constant: f64,
    coef: DVector<f64>,
}

struct ReducedBlock {
    constant: DMatrix<f64>,
    coefs: Vec<DMatrix<f64>>,
}

/// `z = offset + basis · v`.
struct Reduction {
    offset: DVector<f64>,
    basis: DMatrix<f64>,
}

impl Reduction {
    fn row(&self, e: &LinExpr) -> ReducedRow {
        let mut constant = e.constant;
        let mut coef = DVector::zeros(self.basis.ncols());
        for (v, c) in e.terms() {
            constant += c * self.offset[v.0];
            coef.axpy(c, &self.basis.row(v.0).transpose(), 1.0);
        }
        ReducedRow { constant, coef }
    }

    fn block(&self, e: &AffineMatrixExpr, shift: f64) -> ReducedBlock {
        let dim = e.dim();
        let mut constant = e.constant_part().clone();
        for k in 0..dim {
            constant[(k, k)] -= shift;
        }
        let mut coefs = vec![DMatrix::zeros(dim, dim); self.basis.ncols()];
        for (v, m) in e.coefficients() {
            let off = self.offset[v.0];
            if off != 0.0 {
                constant += m * off;
            }
            for (j, c) in coefs.iter_mut().enumerate() {
                let w = self.basis[(v.0, j)];
                if w != 0.0 {
                    *c += m * w;
                }
            }
        }
        ReducedBlock { constant, coefs }
    }
}

const ZERO_COEF: f64 = 1e-13;

fn is_negligible_row(r: &ReducedRow) -> bool {
    r.coef.amax() <= ZERO_COEF * r.constant.abs().max(1.0)
}

fn is_negligible_block(b: &ReducedBlock) -> bool {
    let scale = b.constant.amax().max(1.0);
    b.coefs.iter().all(|c| c.amax() <= ZERO_COEF * scale)
}

/// Solves `problem` to optimality or classifies it.
pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SolveResult> {
    // epigraph lift of the quadratic objective
    let mut lifted_blocks: Vec<AffineMatrixExpr> = problem.psd_constraints().to_vec();
    let n_orig = problem.num_vars();
    let epi = VarId(n_orig);
    let (linear_objective, epi_block) = quadratic_epigraph(problem.objective(), epi)?;
    let n = if let Some(block) = epi_block {
        lifted_blocks.push(block);
        n_orig + 1
    } else {
        n_orig
    };

    let mut rows: Vec<LinExpr> = problem.inequalities().to_vec();
    for (k, var) in problem.variables().iter().enumerate() {
        if let Some(lb) = var.lower {
            rows.push(LinExpr::var(VarId(k)) - LinExpr::constant(lb));
        }
    }

    // equality elimination z = z0 + N w
    let reduction = match eliminate_equalities(problem.equalities(), n) {
        Ok(r) => r,
        Err(residual) => {
            return Ok(SolveResult::without_point(
                SolveStatus::Infeasible,
                Some(InfeasibilityCertificate::InconsistentEqualities { residual }),
            ))
        }
    };

    let mut red_rows: Vec<ReducedRow> = Vec::new();
    for r in &rows {
        let rr = reduction.row(r);
        if is_negligible_row(&rr) {
            if rr.constant < -options.feas_tol {
                return Ok(SolveResult::without_point(
                    SolveStatus::Infeasible,
                    Some(InfeasibilityCertificate::ViolatedConstant {
                        violation: -rr.constant,
                    }),
                ));
            }
            continue;
        }
        red_rows.push(rr);
    }
    let mut red_blocks: Vec<ReducedBlock> = Vec::new();
    for b in &lifted_blocks {
        let rb = reduction.block(b, options.psd_shift);
        if is_negligible_block(&rb) {
            let lo = min_eigenvalue(&rb.constant);
            if lo < -options.feas_tol {
                return Ok(SolveResult::without_point(
                    SolveStatus::Infeasible,
                    Some(InfeasibilityCertificate::ViolatedConstant { violation: -lo }),
                ));
            }
            continue;
        }
        red_blocks.push(rb);
    }
    let red_obj = reduction.row(&linear_objective);

    // directions that no constraint sees
    let n_w = reduction.basis.ncols();
    let mut gram = DMatrix::<f64>::zeros(n_w, n_w);
    for r in &red_rows {
        let s = r.coef.amax().max(r.constant.abs()).max(1e-300);
        gram += (&r.coef / s) * (&r.coef / s).transpose();
    }
    for b in &red_blocks {
        let s = b
            .coefs
            .iter()
            .map(|c| c.amax())
            .fold(b.constant.amax(), f64::max)
            .max(1e-300);
        for i in 0..n_w {
            for j in i..n_w {
                let v = crate::linalg::frob_dot(&b.coefs[i], &b.coefs[j]) / (s * s);
                gram[(i, j)] += v;
                if i != j {
                    gram[(j, i)] += v;
                }
            }
        }
    }
    let eig = SymmetricEigen::new(gram);
    let top = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..n_w)
        .filter(|&k| eig.eigenvalues[k] > 1e-12 * top.max(1e-300))
        .collect();
    for k in 0..n_w {
        if keep.contains(&k) {
            continue;
        }
        let d = eig.eigenvectors.column(k);
        if red_obj.coef.dot(&d).abs() > 1e-10 * red_obj.coef.amax().max(1.0) {
            return Ok(SolveResult::without_point(SolveStatus::Unbounded, None));
        }
    }
    let range = DMatrix::from_fn(n_w, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    let n_v = keep.len();

    // compose the two reparametrizations
    let basis = &reduction.basis * &range;
    let offset = reduction.offset.clone();
    let to_v_row = |r: ReducedRow| ReducedRow {
        constant: r.constant,
        coef: range.tr_mul(&r.coef),
    };
    let red_rows: Vec<ReducedRow> = red_rows.into_iter().map(to_v_row).collect();
    let red_obj = to_v_row(red_obj);
    let red_blocks: Vec<ReducedBlock> = red_blocks
        .into_iter()
        .map(|b| {
            let coefs = (0..n_v)
                .map(|j| {
                    let mut m = DMatrix::zeros(b.constant.nrows(), b.constant.ncols());
                    for (k, c) in b.coefs.iter().enumerate() {
                        let w = range[(k, j)];
                        if w != 0.0 {
                            m += c * w;
                        }
                    }
                    m
                })
                .collect();
            ReducedBlock {
                constant: b.constant,
                coefs,
            }
        })
        .collect();

    let z_of = |v: &DVector<f64>| -> Vec<f64> { (&offset + &basis * v).iter().copied().collect() };

    if n_v == 0 {
        let z = z_of(&DVector::zeros(0));
        return finish(problem, n_orig, &z, SolveStatus::Optimal, 0, None);
    }

    let program = build_program(&red_rows, &red_blocks, &red_obj, n_v);
    let ipm_opts = IpmOptions {
        feas_tol: options.feas_tol,
        opt_tol: options.opt_tol,
        max_iter: options.max_iter,
    };

    // phase one
    let phase_one = phase_one_program(&program);
    let t_index = n_v;
    let p1 = solve_cone(
        &phase_one,
        &IpmOptions {
            feas_tol: options.feas_tol.min(1e-9),
            opt_tol: options.opt_tol.min(1e-9),
            max_iter: options.max_iter,
        },
        |prog, it| {
            it.y[t_index] - prog.dres_abs > options.feas_tol.max(1e-10)
                && prog.dres_abs <= 1e-10
        },
    );
    let mut iterations = p1.progress.iteration;
    match p1.status {
        IpmStatus::Stopped => {}
        IpmStatus::Converged => {
            let t_star = 0.5 * (p1.progress.pobj + p1.progress.dobj);
            if t_star < -options.feas_tol {
                let dual_residual = p1.progress.pinf;
                return Ok(SolveResult {
                    iterations,
                    ..SolveResult::without_point(
                        SolveStatus::Infeasible,
                        Some(InfeasibilityCertificate::PhaseOne {
                            t_star,
                            dual_residual,
                        }),
                    )
                });
            }
        }
        _ => {
            // the primal iterate bounds max t by pobj up to its residual
            let pr = p1.progress;
            if pr.pinf <= 1e-6 && pr.dinf <= options.feas_tol && pr.rel_gap <= 1e-6 {
                let t_star = 0.5 * (pr.pobj + pr.dobj);
                if t_star < -options.feas_tol.max(1e3 * pr.pinf) {
                    return Ok(SolveResult {
                        iterations,
                        ..SolveResult::without_point(
                            SolveStatus::Infeasible,
                            Some(InfeasibilityCertificate::PhaseOne {
                                t_star,
                                dual_residual: pr.pinf,
                            }),
                        )
                    });
                }
            }
            let t_seen = p1.iterate.y[t_index] - p1.progress.dres_abs;
            if !(t_seen > 0.0 && p1.progress.dinf <= options.feas_tol) {
                return Ok(SolveResult {
                    iterations,
                    ..SolveResult::without_point(SolveStatus::NumericalFailure, None)
                });
            }
        }
    }

    // phase two
    let p2 = solve_cone(&program, &ipm_opts, |_, _| false);
    iterations += p2.progress.iteration;
    let v = &p2.iterate.y;
    let status = match p2.status {
        IpmStatus::Converged => SolveStatus::Optimal,
        IpmStatus::DualUnbounded => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalFailure,
    };
    let z = z_of(v);
    finish(problem, n_orig, &z, status, iterations, None)
}

fn finish(
    problem: &SdpProblem,
    n_orig: usize,
    z: &[f64],
    status: SolveStatus,
    iterations: usize,
    certificate: Option<InfeasibilityCertificate>,
) -> Result<SolveResult> {
    let assignment = Assignment::from_values(&z[..n_orig]);
    let objective = problem.objective_value(&assignment)?;
    let mut max_psd_residual = 0.0_f64;
    for c in problem.psd_constraints() {
        max_psd_residual = max_psd_residual.max(-min_eigenvalue(&c.eval(&assignment)?));
    }
    let mut max_linear_residual = 0.0_f64;
    for e in problem.equalities() {
        max_linear_residual = max_linear_residual.max(e.eval(&assignment)?.abs());
    }
    for e in problem.inequalities() {
        max_linear_residual = max_linear_residual.max(-e.eval(&assignment)?);
    }
    for (k, var) in problem.variables().iter().enumerate() {
        if let Some(lb) = var.lower {
            max_linear_residual = max_linear_residual.max(lb - z[k]);
        }
    }
    Ok(SolveResult {
        status,
        assignment,
        objective,
        max_psd_residual,
        max_linear_residual,
        iterations,
        certificate,
    })
}

/// Particular solution plus orthonormal null-space basis, or the residual of
/// an inconsistent system.
fn eliminate_equalities(eqs: &[LinExpr], n: usize) -> std::result::Result<Reduction, f64> {
    if eqs.is_empty() || n == 0 {
        return Ok(Reduction {
            offset: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
        });
    }
    let p = eqs.len();
    let rows = p.max(n);
    let mut a = DMatrix::zeros(rows, n);
    let mut rhs = DVector::zeros(rows);
    for (r, e) in eqs.iter().enumerate() {
        // row scaling keeps the rank test meaningful
        let s = e.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max).max(1e-300);
        for (v, c) in e.terms() {
            a[(r, v.0)] = c / s;
        }
        rhs[r] = -e.constant / s;
    }
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.as_ref().expect("requested");
    let v_t = svd.v_t.as_ref().expect("requested");
    let top = svd.singular_values.amax();
    let tol = 1e-11 * top.max(1e-300) * rows as f64;
    let mut offset = DVector::zeros(n);
    let mut null_cols = Vec::new();
    for k in 0..n {
        let sk = svd.singular_values[k];
        if sk > tol {
            let coef = u.column(k).dot(&rhs) / sk;
            offset.axpy(coef, &v_t.row(k).transpose(), 1.0);
        } else {
            null_cols.push(k);
        }
    }
    let residual = (&a * &offset - &rhs).amax();
    if residual > 1e-9 * (1.0 + rhs.amax()) {
        return Err(residual);
    }
    let basis = DMatrix::from_fn(n, null_cols.len(), |r, c| v_t[(null_cols[c], r)]);
    Ok(Reduction { offset, basis })
}

fn build_program(
    rows: &[ReducedRow],
    blocks: &[ReducedBlock],
    objective: &ReducedRow,
    n_v: usize,
) -> ConeProgram {
    let n_lp = rows.len();
    let mut lp_c = DVector::zeros(n_lp);
    let mut lp_a = DMatrix::zeros(n_lp, n_v);
    for (l, r) in rows.iter().enumerate() {
        let s = r.coef.amax().max(r.constant.abs()).max(1e-300);
        lp_c[l] = r.constant / s;
        for j in 0..n_v {
            lp_a[(l, j)] = -r.coef[j] / s;
        }
    }
    let sdp = blocks
        .iter()
        .map(|b| {
            let s = b
                .coefs
                .iter()
                .map(|c| c.amax())
                .fold(b.constant.amax(), f64::max)
                .max(1e-300);
            SdpBlock {
                c: &b.constant / s,
                a: b
                    .coefs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.amax() > ZERO_COEF * s)
                    .map(|(j, c)| (j, -c / s))
                    .collect(),
            }
        })
        .collect();
    ConeProgram {
        b: -&objective.coef,
        lp_c,
        lp_a,
        blocks: sdp,
    }
}

/// `max t  s.t.  F(v) − t·I ⪰ 0,  rows − t ≥ 0,  t ≤ 1`.
fn phase_one_program(p: &ConeProgram) -> ConeProgram {
    let n_v = p.num_vars();
    let n_lp = p.lp_c.len();
    let mut b = DVector::zeros(n_v + 1);
    b[n_v] = 1.0;
    let mut lp_c = DVector::zeros(n_lp + 1);
    let mut lp_a = DMatrix::zeros(n_lp + 1, n_v + 1);
    lp_c.rows_mut(0, n_lp).copy_from(&p.lp_c);
    lp_a.view_mut((0, 0), (n_lp, n_v)).copy_from(&p.lp_a);
    for l in 0..n_lp {
        lp_a[(l, n_v)] = 1.0;
    }
    lp_c[n_lp] = 1.0;
    lp_a[(n_lp, n_v)] = 1.0;
    let blocks = p
        .blocks
        .iter()
        .map(|blk| {
            let mut a = blk.a.clone();
            let dim = blk.c.nrows();
            a.push((n_v, DMatrix::identity(dim, dim)));
            SdpBlock { c: blk.c.clone(), a }
        })
        .collect();
    ConeProgram {
        b,
        lp_c,
        lp_a,
        blocks,
    }
}

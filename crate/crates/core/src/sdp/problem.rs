use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use super::expr::{AffineMatrixExpr, Assignment, LinExpr, QuadExpr, VarId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: Option<f64>,
}

/// `minimize objective` subject to linear equalities (`expr = 0`), linear
/// inequalities (`expr ≥ 0`), variable lower bounds and LMIs (`expr ⪰ 0`).
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<Variable>,
    equalities: Vec<LinExpr>,
    inequalities: Vec<LinExpr>,
    psd: Vec<AffineMatrixExpr>,
    objective: QuadExpr,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower: None,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_nonneg_var(&mut self, name: impl Into<String>) -> VarId {
        let v = self.add_var(name);
        self.vars[v.0].lower = Some(0.0);
        v
    }

    pub fn add_vars(&mut self, prefix: &str, count: usize) -> Vec<VarId> {
        (0..count)
            .map(|k| self.add_var(format!("{prefix}[{k}]")))
            .collect()
    }

    pub fn set_lower_bound(&mut self, v: VarId, lower: f64) {
        self.vars[v.0].lower = Some(lower);
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn equalities(&self) -> &[LinExpr] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[LinExpr] {
        &self.inequalities
    }

    pub fn psd_constraints(&self) -> &[AffineMatrixExpr] {
        &self.psd
    }

    pub fn objective(&self) -> &QuadExpr {
        &self.objective
    }

    fn check_declared<'a>(&self, vars: impl IntoIterator<Item = VarId> + 'a) -> Result<()> {
        for v in vars {
            if v.0 >= self.vars.len() {
                return Err(Error::UndeclaredVariable(v));
            }
        }
        Ok(())
    }

    /// `lhs = rhs`.
    pub fn add_equality(&mut self, lhs: &LinExpr, rhs: &LinExpr) -> Result<()> {
        let e = lhs - rhs;
        self.check_declared(e.terms().map(|(v, _)| v))?;
        self.equalities.push(e);
        Ok(())
    }

    /// `lhs ≤ rhs`.
    pub fn add_le(&mut self, lhs: &LinExpr, rhs: &LinExpr) -> Result<()> {
        let e = rhs - lhs;
        self.check_declared(e.terms().map(|(v, _)| v))?;
        self.inequalities.push(e);
        Ok(())
    }

    /// `expr ⪰ 0`.
    pub fn add_psd(&mut self, expr: AffineMatrixExpr) -> Result<()> {
        self.check_declared(expr.vars())?;
        self.psd.push(expr);
        Ok(())
    }

    pub fn add_objective(&mut self, term: &QuadExpr) -> Result<()> {
        self.check_declared(term.linear.terms().map(|(v, _)| v))?;
        self.check_declared(term.quadratic_terms().flat_map(|(a, b, _)| [a, b]))?;
        self.objective.add_scaled(term, 1.0);
        Ok(())
    }

    pub fn add_linear_objective(&mut self, term: &LinExpr) -> Result<()> {
        self.add_objective(&QuadExpr::from(term.clone()))
    }

    pub fn objective_value(&self, assignment: &Assignment) -> Result<f64> {
        self.objective.eval(assignment)
    }

    /// Plain-text dump of variables, constraints and objective, for debugging.
    pub fn write_text(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "variables {}", self.vars.len())?;
        for (k, v) in self.vars.iter().enumerate() {
            match v.lower {
                Some(lb) => writeln!(out, "  x{k} {} >= {lb}", v.name)?,
                None => writeln!(out, "  x{k} {}", v.name)?,
            }
        }
        let lin = |e: &LinExpr| {
            let mut s = format!("{}", e.constant);
            for (v, c) in e.terms() {
                s.push_str(&format!(" {c:+}*x{}", v.0));
            }
            s
        };
        writeln!(out, "equalities {}", self.equalities.len())?;
        for e in &self.equalities {
            writeln!(out, "  {} = 0", lin(e))?;
        }
        writeln!(out, "inequalities {}", self.inequalities.len())?;
        for e in &self.inequalities {
            writeln!(out, "  {} >= 0", lin(e))?;
        }
        writeln!(out, "psd {}", self.psd.len())?;
        let mat = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|r| r.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("; ")
        };
        for (k, p) in self.psd.iter().enumerate() {
            writeln!(out, "  block {k} dim {}", p.dim())?;
            writeln!(out, "    const [{}]", mat(p.constant_part()))?;
            for (v, m) in p.coefficients() {
                writeln!(out, "    x{} [{}]", v.0, mat(m))?;
            }
        }
        writeln!(out, "objective")?;
        writeln!(out, "  linear {}", lin(&self.objective.linear))?;
        for (a, b, c) in self.objective.quadratic_terms() {
            writeln!(out, "  quad {c} x{} x{}", a.0, b.0)?;
        }
        Ok(())
    }
}

/// Epigraph lift of a convex quadratic objective: returns the linear objective
/// `epi + linear part` and, when a quadratic part exists, the constraint
/// `[[epi, (Lᵀz)ᵀ], [Lᵀz, I]] ⪰ 0` with `L Lᵀ` the quadratic matrix.
pub fn quadratic_epigraph(
    objective: &QuadExpr,
    epi: VarId,
) -> Result<(LinExpr, Option<AffineMatrixExpr>)> {
    if !objective.has_quadratic() {
        return Ok((objective.linear.clone(), None));
    }
    let mut vars: Vec<VarId> = objective
        .quadratic_terms()
        .flat_map(|(a, b, _)| [a, b])
        .collect();
    vars.sort_unstable();
    vars.dedup();
    let index = |v: VarId| vars.binary_search(&v).expect("collected above");
    let k = vars.len();
    let mut q = DMatrix::zeros(k, k);
    for (a, b, c) in objective.quadratic_terms() {
        let (ia, ib) = (index(a), index(b));
        if ia == ib {
            q[(ia, ia)] += c;
        } else {
            q[(ia, ib)] += 0.5 * c;
            q[(ib, ia)] += 0.5 * c;
        }
    }
    let eig = SymmetricEigen::<f64, nalgebra::Dyn>::new(q);
    let top = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if min < -1e-9 * top.max(1.0) {
        return Err(Error::NonConvexObjective { min_eig: min });
    }
    let cutoff = 1e-12 * top.max(1e-300);
    let factors: Vec<LinExpr> = (0..k)
        .filter(|&col| eig.eigenvalues[col] > cutoff)
        .map(|col| {
            let root = eig.eigenvalues[col].sqrt();
            let mut e = LinExpr::zero();
            for (row, &v) in vars.iter().enumerate() {
                e.add_term(v, root * eig.eigenvectors[(row, col)]);
            }
            e
        })
        .collect();
    let r = factors.len();
    let mut block = AffineMatrixExpr::zeros(r + 1);
    block.add_entry(0, 0, &LinExpr::var(epi));
    for (k, f) in factors.iter().enumerate() {
        block.add_entry(0, k + 1, f);
        block.add_entry(k + 1, k + 1, &LinExpr::constant(1.0));
    }
    let mut linear = objective.linear.clone();
    linear.add_term(epi, 1.0);
    Ok((linear, Some(block)))
}

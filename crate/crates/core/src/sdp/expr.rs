//! Scalar and matrix expressions affine in scalar decision variables.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::asymmetry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Values for a set of variables, indexed by [`VarId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    values: Vec<Option<f64>>,
}

impl Assignment {
    pub fn from_values(values: &[f64]) -> Self {
        Self {
            values: values.iter().copied().map(Some).collect(),
        }
    }

    pub fn from_pairs(pairs: &[(VarId, f64)]) -> Self {
        let mut out = Self::default();
        for &(v, x) in pairs {
            out.set(v, x);
        }
        out
    }

    pub fn set(&mut self, var: VarId, value: f64) {
        if self.values.len() <= var.0 {
            self.values.resize(var.0 + 1, None);
        }
        self.values[var.0] = Some(value);
    }

    pub fn get(&self, var: VarId) -> Option<f64> {
        self.values.get(var.0).copied().flatten()
    }

    pub fn value(&self, var: VarId) -> Result<f64> {
        self.get(var).ok_or(Error::MissingVariable(var))
    }
}

/// `constant + Σ coef · var`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    terms: BTreeMap<VarId, f64>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            terms: BTreeMap::new(),
        }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1.0)
    }

    pub fn term(v: VarId, coef: f64) -> Self {
        let mut e = Self::zero();
        e.add_term(v, coef);
        e
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let slot = self.terms.entry(v).or_insert(0.0);
        *slot += coef;
        if *slot == 0.0 {
            self.terms.remove(&v);
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, scale: f64) {
        self.constant += scale * other.constant;
        for (&v, &c) in &other.terms {
            self.add_term(v, scale * c);
        }
    }

    pub fn scaled(&self, scale: f64) -> LinExpr {
        let mut out = LinExpr::zero();
        out.add_scaled(self, scale);
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.terms.iter().map(|(&v, &c)| (v, c))
    }

    pub fn coefficient(&self, v: VarId) -> f64 {
        self.terms.get(&v).copied().unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<f64> {
        let mut acc = self.constant;
        for (&v, &c) in &self.terms {
            acc += c * assignment.value(v)?;
        }
        Ok(acc)
    }

    /// `Σ coefs[k] · exprs[k]`.
    pub fn dot(coefs: impl IntoIterator<Item = f64>, exprs: &[LinExpr]) -> LinExpr {
        let mut out = LinExpr::zero();
        for (c, e) in coefs.into_iter().zip(exprs) {
            if c != 0.0 {
                out.add_scaled(e, c);
            }
        }
        out
    }

    pub fn sum<'a>(exprs: impl IntoIterator<Item = &'a LinExpr>) -> LinExpr {
        let mut out = LinExpr::zero();
        for e in exprs {
            out += e;
        }
        out
    }

    /// Product of two affine forms, a quadratic expression.
    pub fn product(&self, other: &LinExpr) -> QuadExpr {
        let mut out = QuadExpr::default();
        out.linear.constant = self.constant * other.constant;
        for (v, c) in other.terms() {
            out.linear.add_term(v, self.constant * c);
        }
        for (v, c) in self.terms() {
            out.linear.add_term(v, other.constant * c);
        }
        for (a, ca) in self.terms() {
            for (b, cb) in other.terms() {
                out.add_quadratic(a, b, ca * cb);
            }
        }
        out
    }
}

impl From<f64> for LinExpr {
    fn from(value: f64) -> Self {
        LinExpr::constant(value)
    }
}

impl From<VarId> for LinExpr {
    fn from(v: VarId) -> Self {
        LinExpr::var(v)
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, 1.0);
    }
}

impl SubAssign<&LinExpr> for LinExpr {
    fn sub_assign(&mut self, rhs: &LinExpr) {
        self.add_scaled(rhs, -1.0);
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self += &rhs;
        self
    }
}

impl Add<&LinExpr> for &LinExpr {
    type Output = LinExpr;
    fn add(self, rhs: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: LinExpr) -> LinExpr {
        self -= &rhs;
        self
    }
}

impl Sub<&LinExpr> for &LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}

impl Mul<f64> for &LinExpr {
    type Output = LinExpr;
    fn mul(self, rhs: f64) -> LinExpr {
        self.scaled(rhs)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

/// Symmetric quadratic part keyed by ordered pairs `(a, b)` with `a <= b`;
/// the stored value multiplies `x_a · x_b` as written (cross terms are not halved).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadExpr {
    quad: BTreeMap<(VarId, VarId), f64>,
    pub linear: LinExpr,
}

impl From<LinExpr> for QuadExpr {
    fn from(linear: LinExpr) -> Self {
        QuadExpr {
            linear,
            ..QuadExpr::default()
        }
    }
}

impl QuadExpr {
    pub fn add_quadratic(&mut self, a: VarId, b: VarId, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let key = if a <= b { (a, b) } else { (b, a) };
        *self.quad.entry(key).or_insert(0.0) += coef;
    }

    pub fn add_scaled(&mut self, other: &QuadExpr, scale: f64) {
        for (&(a, b), &c) in &other.quad {
            self.add_quadratic(a, b, scale * c);
        }
        self.linear.add_scaled(&other.linear, scale);
    }

    pub fn quadratic_terms(&self) -> impl Iterator<Item = (VarId, VarId, f64)> + '_ {
        self.quad.iter().map(|(&(a, b), &c)| (a, b, c))
    }

    pub fn has_quadratic(&self) -> bool {
        self.quad.values().any(|&c| c != 0.0)
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<f64> {
        let mut acc = self.linear.eval(assignment)?;
        for (&(a, b), &c) in &self.quad {
            acc += c * assignment.value(a)? * assignment.value(b)?;
        }
        Ok(acc)
    }

    /// `weight · vᵀ m v` for an affine vector `v`.
    pub fn quadratic_form(v: &[LinExpr], m: &DMatrix<f64>, weight: f64) -> QuadExpr {
        let mut out = QuadExpr::default();
        for (r, vr) in v.iter().enumerate() {
            for (c, vc) in v.iter().enumerate() {
                let coef = weight * m[(r, c)];
                if coef != 0.0 {
                    out.add_scaled(&vr.product(vc), coef);
                }
            }
        }
        out
    }
}

/// A `dim × dim` symmetric matrix `constant + Σ var · coefficient`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMatrixExpr {
    dim: usize,
    constant: DMatrix<f64>,
    coefficients: BTreeMap<VarId, DMatrix<f64>>,
}

impl AffineMatrixExpr {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            constant: DMatrix::zeros(dim, dim),
            coefficients: BTreeMap::new(),
        }
    }

    pub fn from_constant(constant: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&constant)?;
        Ok(Self {
            dim: constant.nrows(),
            constant,
            coefficients: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (VarId, &DMatrix<f64>)> {
        self.coefficients.iter().map(|(&v, m)| (v, m))
    }

    pub fn coefficient(&self, v: VarId) -> Option<&DMatrix<f64>> {
        self.coefficients.get(&v)
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.coefficients.keys().copied()
    }

    pub fn add_term(&mut self, var: VarId, coefficient: &DMatrix<f64>) -> Result<()> {
        if coefficient.shape() != (self.dim, self.dim) {
            return Err(Error::Dimension {
                context: "AffineMatrixExpr::add_term".into(),
                expected: format!("{0}x{0}", self.dim),
                found: format!("{}x{}", coefficient.nrows(), coefficient.ncols()),
            });
        }
        check_symmetric(coefficient)?;
        *self
            .coefficients
            .entry(var)
            .or_insert_with(|| DMatrix::zeros(self.dim, self.dim)) += coefficient;
        Ok(())
    }

    /// Adds `e` to entry `(r, c)` and, off the diagonal, to `(c, r)`.
    pub fn add_entry(&mut self, r: usize, c: usize, e: &LinExpr) {
        let dim = self.dim;
        let put = |m: &mut DMatrix<f64>, x: f64| {
            m[(r, c)] += x;
            if r != c {
                m[(c, r)] += x;
            }
        };
        put(&mut self.constant, e.constant);
        for (v, coef) in e.terms() {
            let m = self
                .coefficients
                .entry(v)
                .or_insert_with(|| DMatrix::zeros(dim, dim));
            put(m, coef);
        }
    }

    /// Places the rectangular block `rows` at `(row0, col0)` and its transpose
    /// at `(col0, row0)`. Blocks must lie strictly on one side of the diagonal
    /// or be symmetric diagonal blocks.
    pub fn add_block(&mut self, row0: usize, col0: usize, rows: &[Vec<LinExpr>]) {
        for (r, row) in rows.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                let (gr, gc) = (row0 + r, col0 + c);
                if row0 == col0 && gc < gr {
                    continue;
                }
                self.add_entry(gr, gc, e);
            }
        }
    }

    /// Adds `scale · m` to the constant part at `(row0, col0)` (symmetric block).
    pub fn add_constant_block(&mut self, row0: usize, col0: usize, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if row0 == col0 && c < r {
                    continue;
                }
                self.add_entry(row0 + r, col0 + c, &LinExpr::constant(m[(r, c)]));
            }
        }
    }

    /// Adds `e · m` on a diagonal block (`m` symmetric).
    pub fn add_scaled_block(&mut self, at: usize, m: &DMatrix<f64>, e: &LinExpr) {
        for r in 0..m.nrows() {
            for c in r..m.ncols() {
                if m[(r, c)] != 0.0 {
                    self.add_entry(at + r, at + c, &e.scaled(m[(r, c)]));
                }
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            constant: &self.constant * s,
            coefficients: self.coefficients.iter().map(|(&v, m)| (v, m * s)).collect(),
        }
    }

    /// Exact affine evaluation.
    pub fn eval(&self, assignment: &Assignment) -> Result<DMatrix<f64>> {
        let mut out = self.constant.clone();
        for (&v, m) in &self.coefficients {
            let x = assignment.value(v)?;
            if x != 0.0 {
                out += m * x;
            }
        }
        Ok(out)
    }

    /// Entry `(r, c)` as an affine scalar expression.
    pub fn entry(&self, r: usize, c: usize) -> LinExpr {
        let mut out = LinExpr::constant(self.constant[(r, c)]);
        for (&v, m) in &self.coefficients {
            out.add_term(v, m[(r, c)]);
        }
        out
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension {
            context: "symmetric matrix".into(),
            expected: "square".into(),
            found: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let asym = asymmetry(m);
    let scale = m.amax().max(1.0);
    if asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

/// Evaluates `expr` at `assignment`.
pub fn eval_expr(expr: &AffineMatrixExpr, assignment: &Assignment) -> Result<DMatrix<f64>> {
    expr.eval(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_coefficients_return_constant() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let e = AffineMatrixExpr::from_constant(c.clone()).unwrap();
        assert_eq!(eval_expr(&e, &Assignment::default()).unwrap(), c);
    }

    #[test]
    fn identity_times_variable() {
        let mut e = AffineMatrixExpr::zeros(3);
        e.add_term(VarId(0), &DMatrix::identity(3, 3)).unwrap();
        let at = Assignment::from_values(&[3.0]);
        assert_eq!(e.eval(&at).unwrap(), DMatrix::identity(3, 3) * 3.0);
    }

    #[test]
    fn missing_variable_is_an_error() {
        let mut e = AffineMatrixExpr::zeros(1);
        e.add_entry(0, 0, &LinExpr::var(VarId(4)));
        assert!(matches!(
            e.eval(&Assignment::from_values(&[1.0])),
            Err(Error::MissingVariable(VarId(4)))
        ));
    }

    #[test]
    fn rejects_asymmetric_terms() {
        let mut e = AffineMatrixExpr::zeros(2);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(e.add_term(VarId(0), &bad).is_err());
        assert!(e.add_term(VarId(0), &DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn product_expands() {
        let x = LinExpr::var(VarId(0)) + LinExpr::constant(1.0);
        let q = x.product(&x);
        let at = Assignment::from_values(&[2.0]);
        assert_eq!(q.eval(&at).unwrap(), 9.0);
    }

    #[test]
    fn block_placement_is_symmetric() {
        let mut e = AffineMatrixExpr::zeros(3);
        let a = LinExpr::var(VarId(0));
        e.add_block(0, 1, &[vec![a.clone(), a.scaled(2.0)]]);
        e.add_block(1, 1, &[vec![a.clone(), LinExpr::constant(1.0)], vec![LinExpr::zero(), a.clone()]]);
        let m = e.eval(&Assignment::from_values(&[1.5])).unwrap();
        assert_eq!(m, m.transpose());
        assert_eq!(m[(2, 0)], 3.0);
        assert_eq!(m[(2, 1)], 1.0);
    }

    proptest! {
        #[test]
        fn eval_matches_naive_summation(
            seed in proptest::collection::vec(-5.0..5.0f64, 4 * 9 + 3)
        ) {
            let dim = 3;
            let sym = |vals: &[f64]| {
                let m = DMatrix::from_row_slice(dim, dim, vals);
                (&m + m.transpose()) * 0.5
            };
            let constant = sym(&seed[0..9]);
            let coefs: Vec<_> = (0..3).map(|k| sym(&seed[9 * (k + 1)..9 * (k + 2)])).collect();
            let values = &seed[36..39];
            let mut e = AffineMatrixExpr::from_constant(constant.clone()).unwrap();
            for (k, c) in coefs.iter().enumerate() {
                e.add_term(VarId(k), c).unwrap();
            }
            let got = e.eval(&Assignment::from_values(values)).unwrap();
            for r in 0..dim {
                for c in 0..dim {
                    let mut naive = constant[(r, c)];
                    for k in 0..3 {
                        naive += values[k] * coefs[k][(r, c)];
                    }
                    assert_relative_eq!(got[(r, c)], naive, epsilon = 1e-12);
                }
            }
        }
    }
}

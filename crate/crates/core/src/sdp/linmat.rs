//! Dense matrices whose entries are affine expressions.

use std::ops::{Add, Index, IndexMut, Sub};

use nalgebra::{DMatrix, DVector};

use super::expr::{Assignment, LinExpr, VarId};
use super::problem::SdpProblem;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<LinExpr>,
}

impl ExprMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![LinExpr::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> LinExpr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn constant(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |r, c| LinExpr::constant(m[(r, c)]))
    }

    pub fn column(entries: Vec<LinExpr>) -> Self {
        Self {
            rows: entries.len(),
            cols: 1,
            data: entries,
        }
    }

    pub fn column_vars(vars: &[VarId]) -> Self {
        Self::column(vars.iter().map(|&v| LinExpr::var(v)).collect())
    }

    /// Fresh `rows × cols` variable matrix.
    pub fn new_variable(p: &mut SdpProblem, name: &str, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, c| {
            LinExpr::var(p.add_var(format!("{name}[{r},{c}]")))
        })
    }

    /// Fresh symmetric `n × n` variable matrix (`n(n+1)/2` scalars).
    pub fn new_symmetric(p: &mut SdpProblem, name: &str, n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let v = LinExpr::var(p.add_var(format!("{name}[{r},{c}]")));
                m[(c, r)] = v.clone();
                m[(r, c)] = v;
            }
        }
        m
    }

    /// `diag(e, …, e)` of size `n`.
    pub fn scaled_identity(n: usize, e: &LinExpr) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { e.clone() } else { LinExpr::zero() })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].clone())
    }

    /// `m · self`.
    pub fn left_mul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.ncols(), self.rows, "left_mul dimension");
        Self::from_fn(m.nrows(), self.cols, |r, c| {
            let mut e = LinExpr::zero();
            for k in 0..self.rows {
                let w = m[(r, k)];
                if w != 0.0 {
                    e.add_scaled(&self[(k, c)], w);
                }
            }
            e
        })
    }

    /// `self · m`.
    pub fn right_mul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), self.cols, "right_mul dimension");
        Self::from_fn(self.rows, m.ncols(), |r, c| {
            let mut e = LinExpr::zero();
            for k in 0..self.cols {
                let w = m[(k, c)];
                if w != 0.0 {
                    e.add_scaled(&self[(r, k)], w);
                }
            }
            e
        })
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| e.scaled(s)).collect(),
        }
    }

    /// Rows `r0..r0+n` as a new matrix.
    pub fn rows_range(&self, r0: usize, n: usize) -> Self {
        Self::from_fn(n, self.cols, |r, c| self[(r0 + r, c)].clone())
    }

    /// Vertical concatenation.
    pub fn vstack(parts: &[ExprMatrix]) -> Self {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            assert_eq!(p.cols, cols, "vstack column count");
            rows += p.rows;
            data.extend(p.data.iter().cloned());
        }
        Self { rows, cols, data }
    }

    /// Block diagonal of square parts.
    pub fn block_diagonal(parts: &[ExprMatrix]) -> Self {
        let n: usize = parts.iter().map(|p| p.rows).sum();
        let mut out = Self::zeros(n, n);
        let mut at = 0;
        for p in parts {
            for r in 0..p.rows {
                for c in 0..p.cols {
                    out[(at + r, at + c)] = p[(r, c)].clone();
                }
            }
            at += p.rows;
        }
        out
    }

    pub fn trace(&self) -> LinExpr {
        LinExpr::sum((0..self.rows.min(self.cols)).map(|k| &self[(k, k)]))
    }

    pub fn to_rows(&self) -> Vec<Vec<LinExpr>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)].clone()).collect())
            .collect()
    }

    pub fn entries(&self) -> &[LinExpr] {
        &self.data
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[(r, c)] = self[(r, c)].eval(assignment)?;
            }
        }
        Ok(out)
    }

    pub fn eval_vector(&self, assignment: &Assignment) -> Result<DVector<f64>> {
        let m = self.eval(assignment)?;
        Ok(DVector::from_column_slice(m.as_slice()))
    }
}

impl Index<(usize, usize)> for ExprMatrix {
    type Output = LinExpr;

    fn index(&self, (r, c): (usize, usize)) -> &LinExpr {
        assert!(r < self.rows && c < self.cols, "index out of range");
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ExprMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut LinExpr {
        assert!(r < self.rows && c < self.cols, "index out of range");
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ExprMatrix {
    type Output = ExprMatrix;

    fn add(self, rhs: &ExprMatrix) -> ExprMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add dimension");
        ExprMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ExprMatrix {
    type Output = ExprMatrix;

    fn sub(self, rhs: &ExprMatrix) -> ExprMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub dimension");
        ExprMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

//! Linear matrix inequalities certifying membership, one-step invariance and
//! constraint satisfaction of ellipsoidal terminal sets
//! `{x_i : (x_i − c_i)ᵀ P_i (x_i − c_i) ≤ a_i²}`.
//!
//! Every builder is affine in the set parameters `a_j = α_j^½`, the centers
//! `c_j` and the nonnegative S-procedure multipliers. Neighborhood quantities
//! are assembled from the per-subsystem sets: `c_Ni` stacks `c_j` and
//! `α_Ni^½ = blockdiag(a_j I)` over `j ∈ N_i`; `P_ij` is `P_j` embedded in the
//! coordinates of `N_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{neighbor_embed, SelectionMaps};
use crate::sdp::{AffineMatrixExpr, ExprMatrix, LinExpr, SdpProblem};

/// Numeric terminal set of one subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalSet {
    pub c: DVector<f64>,
    /// `α^½`, nonnegative.
    pub a: f64,
}

impl TerminalSet {
    pub fn centered(n: usize, a: f64) -> Self {
        Self {
            c: DVector::zeros(n),
            a,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.a * self.a
    }
}

/// `(x − c)ᵀ P (x − c) ≤ a² + tol`.
pub fn check_membership(x: &DVector<f64>, set: &TerminalSet, p: &DMatrix<f64>, tol: f64) -> bool {
    let d = x - &set.c;
    (d.transpose() * p * &d)[0] <= set.alpha() + tol
}

/// Decision-variable handles of one terminal set.
#[derive(Debug, Clone)]
pub struct SetVars {
    /// `n_i × 1`; constant zero when the center is pinned.
    pub c: ExprMatrix,
    pub a: LinExpr,
}

impl SetVars {
    /// Fresh `a ≥ 0` and, unless `pinned`, a free center.
    pub fn new(p: &mut SdpProblem, name: &str, n: usize, pinned: bool) -> Self {
        let a = LinExpr::var(p.add_nonneg_var(format!("a{name}")));
        let c = if pinned {
            ExprMatrix::zeros(n, 1)
        } else {
            ExprMatrix::new_variable(p, &format!("c{name}"), n, 1)
        };
        Self { c, a }
    }
}

/// Neighborhood view of the sets of `j ∈ N_i`.
#[derive(Debug, Clone)]
pub struct NeighborhoodSets {
    /// `c_Ni`, stacked in neighborhood order.
    pub c: ExprMatrix,
    /// `α_Ni^½ = blockdiag(a_j I_nj)`.
    pub alpha_half: ExprMatrix,
    /// `P_ij` for `j ∈ N_i`, in neighborhood order.
    pub embedded_p: Vec<DMatrix<f64>>,
}

impl NeighborhoodSets {
    /// `sets` is indexed by global subsystem id; only entries for `j ∈ N_i`
    /// are read.
    pub fn gather(
        i: usize,
        sets: &[Option<&SetVars>],
        p: &[DMatrix<f64>],
        maps: &SelectionMaps,
    ) -> Result<Self> {
        let hood = maps.topology().neighbors(i);
        let mut centers = Vec::with_capacity(hood.len());
        let mut scales = Vec::with_capacity(hood.len());
        let mut embedded_p = Vec::with_capacity(hood.len());
        for &j in hood {
            let set = sets
                .get(j)
                .copied()
                .flatten()
                .ok_or_else(|| Error::InvalidTopology(format!("missing set of subsystem {}", j + 1)))?;
            centers.push(set.c.clone());
            scales.push(ExprMatrix::scaled_identity(maps.state_dim(j), &set.a));
            embedded_p.push(neighbor_embed(&p[j], j, maps, i)?);
        }
        Ok(Self {
            c: ExprMatrix::vstack(&centers),
            alpha_half: ExprMatrix::block_diagonal(&scales),
            embedded_p,
        })
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// `Σ_j μ_j P_ij`.
    fn weighted_p(&self, mult: &[LinExpr]) -> Result<ExprMatrix> {
        if mult.len() != self.embedded_p.len() {
            return Err(Error::Dimension {
                context: "multiplier row".into(),
                expected: self.embedded_p.len().to_string(),
                found: mult.len().to_string(),
            });
        }
        let n = self.dim();
        let mut out = ExprMatrix::zeros(n, n);
        for (p, mu) in self.embedded_p.iter().zip(mult) {
            for r in 0..n {
                for c in 0..n {
                    if p[(r, c)] != 0.0 {
                        out[(r, c)].add_scaled(mu, p[(r, c)]);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Fresh nonnegative multipliers, one per neighbor.
pub fn new_multipliers(p: &mut SdpProblem, name: &str, count: usize) -> Vec<LinExpr> {
    (0..count)
        .map(|k| LinExpr::var(p.add_nonneg_var(format!("{name}[{k}]"))))
        .collect()
}

/// `[[P⁻¹ a, x_T − c], [(x_T − c)ᵀ, a]] ⪰ 0`.
pub fn membership_lmi(
    x_t: &ExprMatrix,
    set: &SetVars,
    p_inv: &DMatrix<f64>,
) -> AffineMatrixExpr {
    let n = p_inv.nrows();
    let mut lmi = AffineMatrixExpr::zeros(n + 1);
    lmi.add_scaled_block(0, p_inv, &set.a);
    lmi.add_block(n, 0, &(x_t - &set.c).transpose().to_rows());
    lmi.add_entry(n, n, &set.a);
    lmi
}

/// Origin-centered membership `[[P⁻¹ a, x_T], [x_Tᵀ, a]] ⪰ 0`.
pub fn membership_lmi_centered(x_t: &ExprMatrix, a: &LinExpr, p_inv: &DMatrix<f64>) -> AffineMatrixExpr {
    let n = p_inv.nrows();
    let mut lmi = AffineMatrixExpr::zeros(n + 1);
    lmi.add_scaled_block(0, p_inv, a);
    lmi.add_block(n, 0, &x_t.transpose().to_rows());
    lmi.add_entry(n, n, a);
    lmi
}

/// One-step invariance of the set of `i` under `x_i⁺ = Φ x_Ni`,
/// `Φ = A_Ni + B_i K_Ni`:
///
/// ```text
/// ⎡ P_i⁻¹ a_i   Φ α_Ni^½     Φ c_Ni − c_i ⎤
/// ⎢     ·       Σ λ_j P_ij        0       ⎥ ⪰ 0
/// ⎣     ·           0        a_i − Σ λ_j  ⎦
/// ```
pub fn invariance_lmi(
    phi: &DMatrix<f64>,
    p_inv_i: &DMatrix<f64>,
    own: &SetVars,
    hood: &NeighborhoodSets,
    lambda: &[LinExpr],
) -> Result<AffineMatrixExpr> {
    let offset = (&hood.c.left_mul(phi)) - &own.c;
    invariance_with_offset(phi, p_inv_i, &own.a, hood, lambda, Some(offset))
}

/// [`invariance_lmi`] for origin-centered sets (no center terms).
pub fn invariance_lmi_centered(
    phi: &DMatrix<f64>,
    p_inv_i: &DMatrix<f64>,
    a_i: &LinExpr,
    hood: &NeighborhoodSets,
    lambda: &[LinExpr],
) -> Result<AffineMatrixExpr> {
    invariance_with_offset(phi, p_inv_i, a_i, hood, lambda, None)
}

fn invariance_with_offset(
    phi: &DMatrix<f64>,
    p_inv_i: &DMatrix<f64>,
    a_i: &LinExpr,
    hood: &NeighborhoodSets,
    lambda: &[LinExpr],
    offset: Option<ExprMatrix>,
) -> Result<AffineMatrixExpr> {
    let n_i = p_inv_i.nrows();
    let n_hood = hood.dim();
    check_phi(phi, n_i, n_hood)?;
    let last = n_i + n_hood;
    let mut lmi = AffineMatrixExpr::zeros(last + 1);
    lmi.add_scaled_block(0, p_inv_i, a_i);
    lmi.add_block(0, n_i, &hood.alpha_half.left_mul(phi).to_rows());
    if let Some(off) = offset {
        lmi.add_block(0, last, &off.to_rows());
    }
    lmi.add_block(n_i, n_i, &hood.weighted_p(lambda)?.to_rows());
    lmi.add_entry(last, last, &(a_i - &LinExpr::sum(lambda)));
    Ok(lmi)
}

fn check_phi(phi: &DMatrix<f64>, n_i: usize, n_hood: usize) -> Result<()> {
    if phi.shape() != (n_i, n_hood) {
        return Err(Error::Dimension {
            context: "terminal closed-loop block".into(),
            expected: format!("{n_i}x{n_hood}"),
            found: format!("{}x{}", phi.nrows(), phi.ncols()),
        });
    }
    Ok(())
}

fn check_row(row: &DMatrix<f64>, hood: &NeighborhoodSets) -> Result<()> {
    if row.shape() != (1, hood.dim()) {
        return Err(Error::Dimension {
            context: "constraint row".into(),
            expected: format!("1x{}", hood.dim()),
            found: format!("{}x{}", row.nrows(), row.ncols()),
        });
    }
    Ok(())
}

/// Squared-row certificate for `row · x_Ni ≤ bound` over the set product:
///
/// ```text
/// ⎡ bound   row α_Ni^½   row c_Ni      ⎤
/// ⎢   ·     Σ μ_j P_ij       0         ⎥ ⪰ 0
/// ⎣   ·        0         bound − Σ μ_j ⎦
/// ```
///
/// Requires `bound > 0`; the form also certifies `−row · x_Ni ≤ bound`.
pub fn row_lmi_quadratic(
    row: &DMatrix<f64>,
    bound: f64,
    hood: &NeighborhoodSets,
    mult: &[LinExpr],
    centered: bool,
) -> Result<AffineMatrixExpr> {
    check_row(row, hood)?;
    let n = hood.dim();
    let mut lmi = AffineMatrixExpr::zeros(n + 2);
    lmi.add_entry(0, 0, &LinExpr::constant(bound));
    lmi.add_block(0, 1, &hood.alpha_half.left_mul(row).to_rows());
    if !centered {
        lmi.add_entry(0, n + 1, &hood.c.left_mul(row)[(0, 0)]);
    }
    lmi.add_block(1, 1, &hood.weighted_p(mult)?.to_rows());
    lmi.add_entry(n + 1, n + 1, &(LinExpr::constant(bound) - LinExpr::sum(mult)));
    Ok(lmi)
}

/// Linear-row certificate for `row · x_Ni ≤ bound`:
///
/// ```text
/// ⎡ Σ μ_j P_ij              ½ α_Ni^½ rowᵀ              ⎤ ⪰ 0
/// ⎣ ½ row α_Ni^½   bound − row c_Ni − Σ μ_j ⎦
/// ```
pub fn row_lmi_linear(
    row: &DMatrix<f64>,
    bound: f64,
    hood: &NeighborhoodSets,
    mult: &[LinExpr],
) -> Result<AffineMatrixExpr> {
    check_row(row, hood)?;
    let n = hood.dim();
    let mut lmi = AffineMatrixExpr::zeros(n + 1);
    lmi.add_block(0, 0, &hood.weighted_p(mult)?.to_rows());
    lmi.add_block(n, 0, &hood.alpha_half.left_mul(row).scaled(0.5).to_rows());
    let corner = LinExpr::constant(bound) - hood.c.left_mul(row)[(0, 0)].clone() - LinExpr::sum(mult);
    lmi.add_entry(n, n, &corner);
    Ok(lmi)
}

fn row_of(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    m.rows(k, 1).into_owned()
}

fn positive_bound(subsystem: usize, row: usize, bound: f64) -> Result<()> {
    if bound > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveBound {
            subsystem,
            row,
            bound,
        })
    }
}

/// State row `k` of subsystem `i`, squared form.
pub fn state_row_lmi_quadratic(
    i: usize,
    k: usize,
    g: &DMatrix<f64>,
    g_rhs: &DVector<f64>,
    hood: &NeighborhoodSets,
    tau: &[LinExpr],
    centered: bool,
) -> Result<AffineMatrixExpr> {
    positive_bound(i, k, g_rhs[k])?;
    row_lmi_quadratic(&row_of(g, k), g_rhs[k], hood, tau, centered)
}

/// Input row `l` of subsystem `i` under the terminal gain, squared form.
#[allow(clippy::too_many_arguments)]
pub fn input_row_lmi_quadratic(
    i: usize,
    l: usize,
    h: &DMatrix<f64>,
    h_rhs: &DVector<f64>,
    k_gain: &DMatrix<f64>,
    hood: &NeighborhoodSets,
    rho: &[LinExpr],
    centered: bool,
) -> Result<AffineMatrixExpr> {
    positive_bound(i, l, h_rhs[l])?;
    row_lmi_quadratic(&(row_of(h, l) * k_gain), h_rhs[l], hood, rho, centered)
}

/// State row `k`, linear form (any sign of the bound).
pub fn state_row_lmi_linear(
    k: usize,
    g: &DMatrix<f64>,
    g_rhs: &DVector<f64>,
    hood: &NeighborhoodSets,
    sigma: &[LinExpr],
) -> Result<AffineMatrixExpr> {
    row_lmi_linear(&row_of(g, k), g_rhs[k], hood, sigma)
}

/// Input row `l` under the terminal gain, linear form.
pub fn input_row_lmi_linear(
    l: usize,
    h: &DMatrix<f64>,
    h_rhs: &DVector<f64>,
    k_gain: &DMatrix<f64>,
    hood: &NeighborhoodSets,
    beta: &[LinExpr],
) -> Result<AffineMatrixExpr> {
    row_lmi_linear(&(row_of(h, l) * k_gain), h_rhs[l], hood, beta)
}

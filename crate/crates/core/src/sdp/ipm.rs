//! Infeasible-start primal-dual path-following method (HKM direction with a
//! Mehrotra predictor-corrector) for problems in the standard dual form
//!
//! ```text
//! maximize  bᵀy
//! s.t.      S_k = C_k − Σ_j y_j A_kj ⪰ 0     (semidefinite blocks)
//!           s   = c − A y ≥ 0                (linear rows)
//! ```
//!
//! with primal `minimize Σ⟨C_k, X_k⟩ + cᵀx  s.t.  Σ⟨A_kj, X_k⟩ + (Aᵀx)_j = b_j`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::linalg::frob_dot;

#[derive(Debug, Clone)]
pub(crate) struct SdpBlock {
    pub c: DMatrix<f64>,
    pub a: Vec<(usize, DMatrix<f64>)>,
}

impl SdpBlock {
    fn dim(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConeProgram {
    pub b: DVector<f64>,
    pub lp_c: DVector<f64>,
    pub lp_a: DMatrix<f64>,
    pub blocks: Vec<SdpBlock>,
}

impl ConeProgram {
    pub fn num_vars(&self) -> usize {
        self.b.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum IpmStatus {
    Converged,
    /// Stopped by the caller's predicate.
    Stopped,
    MaxIter,
    Stalled,
    /// Dual objective diverging with a feasible dual: `bᵀy` unbounded.
    DualUnbounded,
    /// Primal objective diverging with a feasible primal: the dual is infeasible.
    PrimalUnbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmIterate {
    pub x: Vec<DMatrix<f64>>,
    pub s: Vec<DMatrix<f64>>,
    pub x_lp: DVector<f64>,
    pub s_lp: DVector<f64>,
    pub y: DVector<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Progress {
    pub iteration: usize,
    pub pobj: f64,
    pub dobj: f64,
    /// Relative primal and dual infeasibility.
    pub pinf: f64,
    pub dinf: f64,
    /// Largest absolute dual residual entry.
    pub dres_abs: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    pub status: IpmStatus,
    pub iterate: IpmIterate,
    pub progress: Progress,
}

fn chol_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    Cholesky::new(m.clone()).map(|c| c.inverse())
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest `α ≤ 1/γ`-free step keeping `m + α d ⪰ 0` (∞ when unrestricted).
fn max_step_psd(m: &DMatrix<f64>, d: &DMatrix<f64>) -> f64 {
    let Some(chol) = Cholesky::new(m.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let Some(left) = l.solve_lower_triangular(d) else {
        return 0.0;
    };
    let Some(both) = l.solve_lower_triangular(&left.transpose()) else {
        return 0.0;
    };
    let eig = SymmetricEigen::new(sym(both));
    let lo = eig.eigenvalues.min();
    if lo < 0.0 {
        -1.0 / lo
    } else {
        f64::INFINITY
    }
}

fn max_step_lp(v: &DVector<f64>, d: &DVector<f64>) -> f64 {
    v.iter()
        .zip(d.iter())
        .filter(|(_, &dd)| dd < 0.0)
        .map(|(&vv, &dd)| -vv / dd)
        .fold(f64::INFINITY, f64::min)
}

struct Workspace {
    s_inv: Vec<DMatrix<f64>>,
}

impl ConeProgram {
    /// `𝒜(R)`: `Σ_k ⟨A_kj, R_k⟩ + (lp_aᵀ r)_j`.
    fn apply_a(&self, r: &[DMatrix<f64>], r_lp: &DVector<f64>) -> DVector<f64> {
        let mut out = self.lp_a.tr_mul(r_lp);
        for (block, rk) in self.blocks.iter().zip(r) {
            for (j, a) in &block.a {
                out[*j] += frob_dot(a, rk);
            }
        }
        out
    }

    /// `Σ_j y_j A_kj` per block and `lp_a y`.
    fn apply_at(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let blocks = self
            .blocks
            .iter()
            .map(|block| {
                let mut m = DMatrix::zeros(block.dim(), block.dim());
                for (j, a) in &block.a {
                    if y[*j] != 0.0 {
                        m += a * y[*j];
                    }
                }
                m
            })
            .collect();
        (blocks, &self.lp_a * y)
    }

    fn pobj(&self, it: &IpmIterate) -> f64 {
        self.blocks
            .iter()
            .zip(&it.x)
            .map(|(b, x)| frob_dot(&b.c, x))
            .sum::<f64>()
            + self.lp_c.dot(&it.x_lp)
    }

    fn data_norm_c(&self) -> f64 {
        let sdp: f64 = self.blocks.iter().map(|b| b.c.norm_squared()).sum();
        (sdp + self.lp_c.norm_squared()).sqrt()
    }
}

pub(crate) fn initial_iterate(p: &ConeProgram) -> IpmIterate {
    let n = p.num_vars();
    let mut x = Vec::with_capacity(p.blocks.len());
    let mut s = Vec::with_capacity(p.blocks.len());
    for block in &p.blocks {
        let dim = block.dim() as f64;
        let mut xi = 10.0_f64.max(dim.sqrt());
        let mut eta = 10.0_f64.max(dim.sqrt()).max(block.c.norm());
        for (j, a) in &block.a {
            let an = a.norm();
            xi = xi.max(dim * (1.0 + p.b[*j].abs()) / (1.0 + an));
            eta = eta.max(an);
        }
        x.push(DMatrix::identity(block.dim(), block.dim()) * xi);
        s.push(DMatrix::identity(block.dim(), block.dim()) * eta);
    }
    let n_lp = p.lp_c.len();
    let mut x_lp = DVector::from_element(n_lp, 1.0);
    let mut s_lp = DVector::from_element(n_lp, 1.0);
    for l in 0..n_lp {
        let row = p.lp_a.row(l);
        let an = row.norm();
        let mut xi = 10.0_f64;
        for j in 0..n {
            if row[j] != 0.0 {
                xi = xi.max((1.0 + p.b[j].abs()) / (1.0 + an));
            }
        }
        x_lp[l] = xi;
        s_lp[l] = 10.0_f64.max(p.lp_c[l].abs()).max(an);
    }
    IpmIterate {
        x,
        s,
        x_lp,
        s_lp,
        y: DVector::zeros(n),
    }
}

pub(crate) fn solve_cone(
    p: &ConeProgram,
    opts: &IpmOptions,
    mut stop: impl FnMut(&Progress, &IpmIterate) -> bool,
) -> IpmOutcome {
    let n = p.num_vars();
    let n_lp = p.lp_c.len();
    let big_n = (p.blocks.iter().map(SdpBlock::dim).sum::<usize>() + n_lp).max(1) as f64;
    let norm_b = p.b.norm();
    let norm_c = p.data_norm_c();

    let mut it = initial_iterate(p);
    let mut progress = Progress::default();
    let mut stalls = 0;
    let mut gamma = 0.9;

    for iteration in 0..=opts.max_iter {
        // residuals
        let ax = p.apply_a(&it.x, &it.x_lp);
        let rp = &p.b - &ax;
        let (aty, aty_lp) = p.apply_at(&it.y);
        let rd: Vec<DMatrix<f64>> = p
            .blocks
            .iter()
            .zip(&it.s)
            .zip(&aty)
            .map(|((b, s), a)| &b.c - s - a)
            .collect();
        let rd_lp = &p.lp_c - &it.s_lp - &aty_lp;
        let rd_norm = (rd.iter().map(|m| m.norm_squared()).sum::<f64>()
            + rd_lp.norm_squared())
        .sqrt();
        let dres_abs = rd
            .iter()
            .map(|m| m.amax())
            .chain(std::iter::once(rd_lp.amax()))
            .fold(0.0, f64::max);
        let complementarity: f64 = it
            .x
            .iter()
            .zip(&it.s)
            .map(|(x, s)| frob_dot(x, s))
            .sum::<f64>()
            + it.x_lp.dot(&it.s_lp);
        let mu = complementarity / big_n;
        let pobj = p.pobj(&it);
        let dobj = p.b.dot(&it.y);
        progress = Progress {
            iteration,
            pobj,
            dobj,
            pinf: rp.norm() / (1.0 + norm_b),
            dinf: rd_norm / (1.0 + norm_c),
            dres_abs,
            rel_gap: (pobj - dobj).abs().max(complementarity.abs())
                / (1.0 + pobj.abs() + dobj.abs()),
        };

        if progress.pinf <= opts.feas_tol
            && progress.dinf <= opts.feas_tol
            && progress.rel_gap <= opts.opt_tol
        {
            return IpmOutcome {
                status: IpmStatus::Converged,
                iterate: it,
                progress,
            };
        }
        if stop(&progress, &it) {
            return IpmOutcome {
                status: IpmStatus::Stopped,
                iterate: it,
                progress,
            };
        }
        if progress.dinf <= opts.feas_tol && dobj > 1e10 {
            return IpmOutcome {
                status: IpmStatus::DualUnbounded,
                iterate: it,
                progress,
            };
        }
        if progress.pinf <= opts.feas_tol && pobj < -1e10 {
            return IpmOutcome {
                status: IpmStatus::PrimalUnbounded,
                iterate: it,
                progress,
            };
        }
        if iteration == opts.max_iter {
            break;
        }

        // Schur complement
        let mut ws = Workspace {
            s_inv: Vec::with_capacity(p.blocks.len()),
        };
        let mut ok = true;
        for s in &it.s {
            match chol_inverse(s) {
                Some(inv) => ws.s_inv.push(sym(inv)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            return IpmOutcome {
                status: IpmStatus::Stalled,
                iterate: it,
                progress,
            };
        }
        let mut m = DMatrix::<f64>::zeros(n, n);
        for ((block, x), s_inv) in p.blocks.iter().zip(&it.x).zip(&ws.s_inv) {
            for (jj, (j, aj)) in block.a.iter().enumerate() {
                let g = x * aj * s_inv;
                for (i, ai) in block.a.iter().take(jj + 1) {
                    let v = frob_dot(ai, &g);
                    m[(*i, *j)] += v;
                    if i != j {
                        m[(*j, *i)] += v;
                    }
                }
            }
        }
        if n_lp > 0 {
            let ratio = it.x_lp.component_div(&it.s_lp);
            let mut scaled = p.lp_a.clone();
            for (l, mut row) in scaled.row_iter_mut().enumerate() {
                row *= ratio[l];
            }
            m += p.lp_a.tr_mul(&scaled);
        }
        let m = sym(m);
        let Some(chol) = factor_schur(&m) else {
            return IpmOutcome {
                status: IpmStatus::Stalled,
                iterate: it,
                progress,
            };
        };

        // X Rd S⁻¹ and x∘rd/s are shared by predictor and corrector
        let x_rd_sinv: Vec<DMatrix<f64>> = it
            .x
            .iter()
            .zip(&rd)
            .zip(&ws.s_inv)
            .map(|((x, r), si)| x * r * si)
            .collect();
        let x_rd_s_lp = it.x_lp.component_mul(&rd_lp).component_div(&it.s_lp);
        let a_xrds = p.apply_a(&x_rd_sinv, &x_rd_s_lp);

        let direction = |rc: &[DMatrix<f64>], rc_lp: &DVector<f64>| {
            let rhs = &rp - p.apply_a(rc, rc_lp) + &a_xrds;
            let dy = chol.solve(&rhs);
            let (atdy, atdy_lp) = p.apply_at(&dy);
            let ds: Vec<DMatrix<f64>> = rd.iter().zip(&atdy).map(|(r, a)| r - a).collect();
            let ds_lp = &rd_lp - &atdy_lp;
            let dx: Vec<DMatrix<f64>> = rc
                .iter()
                .zip(&it.x)
                .zip(&ds)
                .zip(&ws.s_inv)
                .map(|(((r, x), d), si)| sym(r - x * d * si))
                .collect();
            let dx_lp = rc_lp - it.x_lp.component_mul(&ds_lp).component_div(&it.s_lp);
            (dx, dx_lp, dy, ds, ds_lp)
        };
        let steps = |dx: &[DMatrix<f64>], dx_lp: &DVector<f64>, ds: &[DMatrix<f64>], ds_lp: &DVector<f64>| {
            let mut ap = max_step_lp(&it.x_lp, dx_lp);
            let mut ad = max_step_lp(&it.s_lp, ds_lp);
            for (x, d) in it.x.iter().zip(dx) {
                ap = ap.min(max_step_psd(x, d));
            }
            for (s, d) in it.s.iter().zip(ds) {
                ad = ad.min(max_step_psd(s, d));
            }
            (ap, ad)
        };

        // predictor
        let rc: Vec<DMatrix<f64>> = it.x.iter().map(|x| -x).collect();
        let rc_lp = -&it.x_lp;
        let (dx_a, dx_lp_a, _, ds_a, ds_lp_a) = direction(&rc, &rc_lp);
        let (ap, ad) = steps(&dx_a, &dx_lp_a, &ds_a, &ds_lp_a);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for k in 0..p.blocks.len() {
            mu_aff += frob_dot(&(&it.x[k] + &dx_a[k] * ap), &(&it.s[k] + &ds_a[k] * ad));
        }
        mu_aff += (&it.x_lp + &dx_lp_a * ap).dot(&(&it.s_lp + &ds_lp_a * ad));
        mu_aff /= big_n;
        let sigma = if mu > 0.0 {
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        // corrector
        let target = sigma * mu;
        let rc: Vec<DMatrix<f64>> = (0..p.blocks.len())
            .map(|k| {
                let si = &ws.s_inv[k];
                si * target - &it.x[k] - &dx_a[k] * &ds_a[k] * si
            })
            .collect();
        let rc_lp = DVector::from_fn(n_lp, |l, _| {
            target / it.s_lp[l] - it.x_lp[l] - dx_lp_a[l] * ds_lp_a[l] / it.s_lp[l]
        });
        let (dx, dx_lp, dy, ds, ds_lp) = direction(&rc, &rc_lp);
        let (ap, ad) = steps(&dx, &dx_lp, &ds, &ds_lp);
        let ap = (gamma * ap).min(1.0);
        let ad = (gamma * ad).min(1.0);

        for k in 0..p.blocks.len() {
            it.x[k] += &dx[k] * ap;
            it.s[k] += &ds[k] * ad;
        }
        it.x_lp += &dx_lp * ap;
        it.s_lp += &ds_lp * ad;
        it.y += &dy * ad;

        gamma = (0.9 + 0.09 * ap.min(ad)).min(0.99);
        if ap.max(ad) < 1e-9 {
            stalls += 1;
            if stalls >= 5 {
                return IpmOutcome {
                    status: IpmStatus::Stalled,
                    iterate: it,
                    progress,
                };
            }
        } else {
            stalls = 0;
        }
    }
    IpmOutcome {
        status: IpmStatus::MaxIter,
        iterate: it,
        progress,
    }
}

fn factor_schur(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let mut reg = 1e-14 * scale;
    for _ in 0..8 {
        let shifted = m + DMatrix::identity(m.nrows(), m.ncols()) * reg;
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        reg *= 100.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> IpmOptions {
        IpmOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            max_iter: 100,
        }
    }

    #[test]
    fn scalar_lp() {
        // maximize y s.t. 2 - y ≥ 0, 1 + y ≥ 0
        let p = ConeProgram {
            b: DVector::from_vec(vec![1.0]),
            lp_c: DVector::from_vec(vec![2.0, 1.0]),
            lp_a: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            blocks: vec![],
        };
        let out = solve_cone(&p, &opts(), |_, _| false);
        assert_eq!(out.status, IpmStatus::Converged);
        assert!((out.iterate.y[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn two_by_two_block() {
        // maximize -y s.t. [[y, 1], [1, y]] ⪰ 0  →  y = 1
        let p = ConeProgram {
            b: DVector::from_vec(vec![-1.0]),
            lp_c: DVector::zeros(0),
            lp_a: DMatrix::zeros(0, 1),
            blocks: vec![SdpBlock {
                c: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
                a: vec![(0, -DMatrix::identity(2, 2))],
            }],
        };
        let out = solve_cone(&p, &opts(), |_, _| false);
        assert_eq!(out.status, IpmStatus::Converged);
        assert!((out.iterate.y[0] - 1.0).abs() < 1e-7);
    }
}

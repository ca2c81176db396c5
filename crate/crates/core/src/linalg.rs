//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `m - mᵀ`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for r in 0..m.nrows() {
        for c in (r + 1)..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)]).abs());
        }
    }
    worst
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Symmetric square root; eigenvalues below `1e-12` are clipped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| if l < 1e-12 { 0.0 } else { l.sqrt() });
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Symmetric inverse square root of a positive-definite matrix.
pub fn inv_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return None;
    }
    let roots = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    Some(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// Spectral condition number of a symmetric matrix (infinite when singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrize(m));
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &l| (lo.min(l.abs()), hi.max(l.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Frobenius inner product `⟨a, b⟩ = tr(aᵀ b)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn vec_from(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

/// Row-major nested representation, as used in the JSON formats.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Inverse of [`to_rows`]; `None` for ragged input. An empty list gives a
/// `0 × 0` matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

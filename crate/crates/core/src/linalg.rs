//! Dense helpers on top of nalgebra: Cholesky with a jitter ladder and
//! blocked triangular solves whose bulk work goes through GEMM.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Extra diagonal terms tried, in order, when a factorization fails.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

const BLOCK: usize = 64;

/// Lower Cholesky factor, or `None` if the matrix is not numerically PD.
pub fn cholesky_lower(a: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = a.cholesky()?.unpack();
    if l.diagonal().iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(l)
    } else {
        None
    }
}

/// Factor `a + (diag + jitter) I`, walking up [`JITTER_LADDER`].
/// Returns the factor and the jitter that was needed.
pub fn cholesky_with_jitter(a: &DMatrix<f64>, diag: f64) -> Result<(DMatrix<f64>, f64)> {
    for &jitter in JITTER_LADDER.iter() {
        let mut shifted = a.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += diag + jitter;
        }
        if let Some(l) = cholesky_lower(shifted) {
            return Ok((l, jitter));
        }
    }
    Err(Error::IllConditioned)
}

/// Overwrites `b` with `L^{-1} b` for lower-triangular `l`.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    debug_assert_eq!(b.nrows(), n);
    let mut k0 = 0;
    while k0 < n {
        let k1 = (k0 + BLOCK).min(n);
        if k0 > 0 {
            let (solved, mut current) = b.rows_range_pair_mut(0..k0, k0..k1);
            current.gemm(-1.0, &l.view((k0, 0), (k1 - k0, k0)), &solved, 1.0);
        }
        for mut col in b.column_iter_mut() {
            for i in k0..k1 {
                let mut v = col[i];
                for j in k0..i {
                    v -= l[(i, j)] * col[j];
                }
                col[i] = v / l[(i, i)];
            }
        }
        k0 = k1;
    }
}

/// Overwrites `b` with `L^{-T} b` for lower-triangular `l`.
pub fn solve_lower_transpose_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    debug_assert_eq!(b.nrows(), n);
    let mut k1 = n;
    while k1 > 0 {
        let k0 = k1.saturating_sub(BLOCK);
        if k1 < n {
            // rows k1..n of L restricted to columns k0..k1, transposed
            let panel = l.view((k1, k0), (n - k1, k1 - k0)).transpose();
            let (mut current, solved) = b.rows_range_pair_mut(k0..k1, k1..n);
            current.gemm(-1.0, &panel, &solved, 1.0);
        }
        for mut col in b.column_iter_mut() {
            for i in (k0..k1).rev() {
                let mut v = col[i];
                for j in i + 1..k1 {
                    v -= l[(j, i)] * col[j];
                }
                col[i] = v / l[(i, i)];
            }
        }
        k1 = k0;
    }
}

/// Solves `(L L^T) x = b`.
pub fn chol_solve(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = b.clone();
    solve_lower_in_place(l, &mut x);
    solve_lower_transpose_in_place(l, &mut x);
    x
}

pub fn chol_solve_vec(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve_lower_in_place(l, &mut x);
    solve_lower_transpose_in_place(l, &mut x);
    DVector::from_column_slice(x.as_slice())
}

/// `(L L^T)^{-1}` as an explicit dense matrix.
pub fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut linv = DMatrix::identity(n, n);
    solve_lower_in_place(l, &mut linv);
    let linv_t = linv.transpose();
    &linv_t * &linv
}

pub fn chol_log_det(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Extends the factor of `A` to the factor of `[[A, c], [c^T, diag]]`.
/// Returns `None` when the new pivot is not positive.
pub fn chol_append(l: &DMatrix<f64>, cross: &DVector<f64>, diag: f64) -> Option<DMatrix<f64>> {
    let n = l.nrows();
    let mut row = DMatrix::from_column_slice(n, 1, cross.as_slice());
    solve_lower_in_place(l, &mut row);
    let pivot2 = diag - row.iter().map(|v| v * v).sum::<f64>();
    if !(pivot2 > 0.0) || !pivot2.is_finite() {
        return None;
    }
    let mut out = DMatrix::zeros(n + 1, n + 1);
    out.view_mut((0, 0), (n, n)).copy_from(l);
    for j in 0..n {
        out[(n, j)] = row[j];
    }
    out[(n, n)] = pivot2.sqrt();
    Some(out)
}

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};

/// Relative column-norm floor below which the input is treated as rank
/// deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Thin Householder QR of a `d×s` matrix with `d ≥ s`.
///
/// The factorization is sign-fixed so that `R` has a strictly positive
/// diagonal, which makes it unique. Fails with
/// [`Error::DegenerateDirection`] when a diagonal entry of `R` is below
/// `1e-12` times the largest column norm of `m`.
pub fn thin_qr(m: &Matrix) -> Result<(Matrix, Matrix)> {
    let (d, s) = m.shape();
    if d < s {
        return Err(Error::invalid(format!(
            "thin QR needs rows >= cols, got {d}x{s}"
        )));
    }
    // Column j of m is row j of `a`; reflectors overwrite it in place.
    let mut a = m.transpose();
    let max_norm = (0..s).map(|j| norm2(a.row(j))).fold(0.0, f64::max);
    let floor = RANK_TOL * max_norm;

    let mut diag = vec![0.0; s];
    let mut betas = vec![0.0; s];
    for k in 0..s {
        let x = &a.row(k)[k..];
        let alpha = norm2(x);
        if alpha <= floor || alpha == 0.0 {
            return Err(Error::DegenerateDirection {
                column: k,
                norm: alpha,
            });
        }
        let x0 = x[0];
        let sign = if x0 < 0.0 { -1.0 } else { 1.0 };
        let v0 = x0 + sign * alpha;
        diag[k] = -sign * alpha;
        {
            let row = &mut a.row_mut(k)[k..];
            row[0] = v0;
        }
        let v = a.row(k)[k..].to_vec();
        let vtv = dot(&v, &v);
        let beta = 2.0 / vtv;
        betas[k] = beta;
        for j in k + 1..s {
            let row = &mut a.row_mut(j)[k..];
            let w = beta * dot(&v, row);
            for (r, vi) in row.iter_mut().zip(&v) {
                *r -= w * vi;
            }
        }
    }

    let mut r = Matrix::zeros(s, s);
    for k in 0..s {
        r[(k, k)] = diag[k];
        for j in k + 1..s {
            r[(k, j)] = a[(j, k)];
        }
    }

    // Q = H_0 ⋯ H_{s-1} [I_s; 0], built column by column as rows of `qt`.
    let mut qt = Matrix::zeros(s, d);
    for j in 0..s {
        qt[(j, j)] = 1.0;
    }
    for k in (0..s).rev() {
        let v = &a.row(k)[k..];
        let beta = betas[k];
        for j in k..s {
            let col = &mut qt.row_mut(j)[k..];
            let w = beta * dot(v, col);
            for (c, vi) in col.iter_mut().zip(v) {
                *c -= w * vi;
            }
        }
    }

    for k in 0..s {
        if r[(k, k)] < 0.0 {
            for j in k..s {
                r[(k, j)] = -r[(k, j)];
            }
            for x in qt.row_mut(k) {
                *x = -*x;
            }
        }
    }
    Ok((qt.transpose(), r))
}

/// Gram matrices whose smallest Cholesky pivot falls below this fraction of
/// the largest diagonal entry are handed to Householder QR instead.
const CHOLESKY_PIVOT_FLOOR: f64 = 1e-10;

/// The `Q` factor of the sign-fixed thin QR of `m`.
///
/// Runs Cholesky QR twice, which is mostly matrix products and yields the
/// same factor as [`thin_qr`] up to round-off for well-conditioned inputs.
/// Ill-conditioned inputs fall back to [`thin_qr`].
pub fn thin_q(m: &Matrix) -> Result<Matrix> {
    let (d, s) = m.shape();
    if d < s {
        return Err(Error::invalid(format!(
            "thin QR needs rows >= cols, got {d}x{s}"
        )));
    }
    let mut q = m.clone();
    for _ in 0..2 {
        match cholesky_upper(&q.t_matmul(&q)?) {
            Some(r) => q = q.matmul(&upper_inverse(&r))?,
            None => return Ok(thin_qr(m)?.0),
        }
    }
    Ok(q)
}

/// Upper-triangular `R` with `RᵀR = a` and positive diagonal, or `None`
/// when a pivot is too small relative to the diagonal.
fn cholesky_upper(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let floor = CHOLESKY_PIVOT_FLOOR * scale;
    // Right-looking: row i of R is final once the trailing block has been
    // updated with rows 0..i.
    let mut work = a.clone();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        let pivot = work[(i, i)];
        if !(pivot > floor) {
            return None;
        }
        let rii = pivot.sqrt();
        for (dst, src) in r.row_mut(i)[i..].iter_mut().zip(&work.row(i)[i..]) {
            *dst = src / rii;
        }
        let ri = r.row(i).to_vec();
        for k in i + 1..n {
            let f = ri[k];
            for (w, x) in work.row_mut(k)[k..].iter_mut().zip(&ri[k..]) {
                *w -= f * x;
            }
        }
    }
    Some(r)
}

/// Inverse of a nonsingular upper-triangular matrix, by back substitution
/// on whole rows.
fn upper_inverse(r: &Matrix) -> Matrix {
    let n = r.rows();
    let mut inv = Matrix::zeros(n, n);
    for i in (0..n).rev() {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        for k in i + 1..n {
            let f = r[(i, k)];
            for (x, y) in row[k..].iter_mut().zip(&inv.row(k)[k..]) {
                *x -= f * y;
            }
        }
        let rii = r[(i, i)];
        for (dst, x) in inv.row_mut(i)[i..].iter_mut().zip(&row[i..]) {
            *dst = x / rii;
        }
    }
    inv
}

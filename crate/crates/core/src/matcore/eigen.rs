//! Symmetric eigendecomposition.
//!
//! Two solvers are provided: cyclic Jacobi rotations, and Householder
//! tridiagonalization followed by implicit QL. [`sym_eig`] uses Jacobi for
//! small matrices and the tridiagonal route above [`JACOBI_MAX_DIM`], where a
//! Jacobi sweep becomes too expensive. Both produce the same normalized output:
//! eigenvalues sorted descending and each eigenvector's largest-magnitude
//! entry made positive.

use super::matrix::{axpy_slice, dot, Matrix, SymmetricMatrix};
use crate::error::{Error, Result};

/// Largest dimension handled by the Jacobi solver in [`sym_eig`].
pub const JACOBI_MAX_DIM: usize = 256;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_REL_TOL: f64 = 1e-12;
const QL_MAX_ITERATIONS: usize = 60;

/// `A = V Λ Vᵀ` with eigenvalues descending and column `i` of `V` paired
/// with eigenvalue `i`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The eigenvectors of the `k` largest eigenvalues, as columns.
    pub fn top(&self, k: usize) -> Matrix {
        self.eigenvectors.leading_columns(k)
    }

    /// The eigenvectors of the `k` smallest eigenvalues, smallest first.
    pub fn bottom(&self, k: usize) -> Matrix {
        let d = self.dim();
        Matrix::from_fn(d, k, |i, j| self.eigenvectors[(i, d - 1 - j)])
    }

    /// Builds the sorted, sign-normalized decomposition from eigenvalues and
    /// eigenvectors stored as rows of `vt`.
    fn from_rows(values: Vec<f64>, vt: &Matrix) -> Self {
        let d = values.len();
        let mut order: Vec<usize> = (0..d).collect();
        // stable: equal eigenvalues keep solver order
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let mut vectors = Matrix::zeros(d, d);
        for (col, &src) in order.iter().enumerate() {
            let v = vt.row(src);
            let mut pivot = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for (i, x) in v.iter().enumerate() {
                vectors[(i, col)] = sign * x;
            }
        }
        EigenDecomposition {
            eigenvalues: order.iter().map(|&i| values[i]).collect(),
            eigenvectors: vectors,
        }
    }
}

/// Full spectral decomposition of a symmetric matrix.
pub fn sym_eig(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    if a.dim() <= JACOBI_MAX_DIM {
        jacobi_eig(a)
    } else {
        tridiagonal_eig(a)
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations. Stops once the off-diagonal Frobenius norm falls
/// below `1e-12·‖A‖_F`, failing after 100 sweeps.
pub fn jacobi_eig(sym: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = sym.dim();
    let mut a = sym.as_matrix().clone();
    let mut vt = Matrix::identity(n);
    let threshold = JACOBI_REL_TOL * a.frobenius_norm();

    let mut sweeps = 0;
    loop {
        let off = off_diagonal_norm(&a);
        if off <= threshold {
            break;
        }
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off,
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                rotate(&mut a, &mut vt, p, q, c, s);
            }
        }
    }
    let values = (0..n).map(|i| a[(i, i)]).collect();
    Ok(EigenDecomposition::from_rows(values, &vt))
}

// A ← JᵀAJ with J the (p, q) plane rotation, V ← VJ (V stored transposed).
fn rotate(a: &mut Matrix, vt: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let (akp, akq) = (a[(k, p)], a[(k, q)]);
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    rotate_rows(vt, p, q, c, s);
}

#[inline]
fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.cols();
    let data = m.as_mut_slice();
    let (lo, hi) = data.split_at_mut(q * n);
    let rp = &mut lo[p * n..(p + 1) * n];
    let rq = &mut hi[..n];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Householder tridiagonalization followed by the implicit QL algorithm.
pub fn tridiagonal_eig(sym: &SymmetricMatrix) -> Result<EigenDecomposition> {
    let n = sym.dim();
    if n == 1 {
        return Ok(EigenDecomposition {
            eigenvalues: vec![sym[(0, 0)]],
            eigenvectors: Matrix::identity(1),
        });
    }
    // `w` holds the transpose of the accumulated transform, so every inner
    // loop below runs along a contiguous row. A is symmetric, so w starts as A.
    let mut w = sym.as_matrix().clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut w, &mut d, &mut e);
    implicit_ql(&mut w, &mut d, &mut e)?;
    Ok(EigenDecomposition::from_rows(d, &w))
}

// Householder reduction to tridiagonal form. On return `d` holds the diagonal,
// `e[1..]` the subdiagonal and the rows of `w` the orthogonal basis.
fn tridiagonalize(w: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = w[(j, n - 1)];
    }
    for i in (1..n).rev() {
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        let mut h = 0.0;
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[(j, i - 1)];
                w[(j, i)] = 0.0;
                w[(i, j)] = 0.0;
            }
        } else {
            for x in &mut d[..i] {
                *x /= scale;
                h += *x * *x;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);

            for j in 0..i {
                let f = d[j];
                w[(i, j)] = f;
                let row = &w.row(j)[..i];
                let mut g = e[j] + row[j] * f;
                g += dot(&row[j + 1..], &d[j + 1..i]);
                axpy_slice(f, &row[j + 1..], &mut e[j + 1..i]);
                e[j] = g;
            }
            let mut f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (f, g) = (d[j], e[j]);
                let row = &mut w.row_mut(j)[j..i];
                for (k, x) in row.iter_mut().enumerate() {
                    *x -= f * e[j + k] + g * d[j + k];
                }
                d[j] = w[(j, i - 1)];
                w[(j, i)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        w[(i, n - 1)] = w[(i, i)];
        w[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[(i + 1, k)] / h;
            }
            for j in 0..=i {
                let g = dot(&w.row(i + 1)[..=i], &w.row(j)[..=i]);
                let row = &mut w.row_mut(j)[..=i];
                axpy_slice(-g, &d[..=i], row);
            }
        }
        for k in 0..=i {
            w[(i + 1, k)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[(j, n - 1)];
        w[(j, n - 1)] = 0.0;
    }
    w[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e), accumulating rotations into the rows
// of `w`.
fn implicit_ql(w: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > QL_MAX_ITERATIONS {
                    return Err(Error::NoConvergence {
                        sweeps: iter,
                        residual: e[l].abs(),
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for x in &mut d[l + 2..n] {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    // columns i, i+1 of V are rows i, i+1 of w
                    rotate_rows(w, i, i + 1, c, s);
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

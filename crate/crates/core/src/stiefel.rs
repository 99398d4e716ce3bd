//! Geometry of the Stiefel manifold `St(d, s)`: the `d×s` matrices with
//! orthonormal columns.
//!
//! Tangent vectors use the embedded (Euclidean) metric, so the projection of
//! an ambient matrix `G` onto the tangent space at `U` is
//! `G − U·sym(UᵀG)`. Points are moved with the QR retraction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matcore::{sym_eig, thin_q, thin_qr, Matrix, SymmetricMatrix};

/// Tolerance on `‖UᵀU − I‖_F` for a valid point.
pub const ORTHONORMALITY_TOL: f64 = 1e-6;

/// An orthonormal frame `U ∈ St(d, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    u: Matrix,
}

impl StiefelPoint {
    /// Wraps `u`, checking `‖UᵀU − I‖_F ≤ 1e-6`.
    pub fn new(u: Matrix) -> Result<Self> {
        if u.cols() > u.rows() {
            return Err(Error::invalid(format!(
                "a {}x{} frame cannot have orthonormal columns",
                u.rows(),
                u.cols()
            )));
        }
        let dev = orthonormality_error(&u);
        if !(dev <= ORTHONORMALITY_TOL) {
            return Err(Error::invalid(format!(
                "columns are not orthonormal: ‖UᵀU − I‖_F = {dev:.3e}"
            )));
        }
        Ok(StiefelPoint { u })
    }

    /// `[e_1, …, e_s]`.
    pub fn axis_aligned(d: usize, s: usize) -> Result<Self> {
        check_dims(d, s)?;
        Ok(StiefelPoint {
            u: Matrix::from_fn(d, s, |i, j| if i == j { 1.0 } else { 0.0 }),
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.u
    }

    pub fn into_matrix(self) -> Matrix {
        self.u
    }

    /// Ambient dimension `d`.
    pub fn ambient_dim(&self) -> usize {
        self.u.rows()
    }

    /// Subspace dimension `s`.
    pub fn subspace_dim(&self) -> usize {
        self.u.cols()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.u)
    }

    /// The projector `UUᵀ` applied to a vector.
    pub fn project_vec(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.ambient_dim() {
            return Err(Error::invalid(format!(
                "vector of length {} for a {}-dimensional projector",
                z.len(),
                self.ambient_dim()
            )));
        }
        let coords: Vec<f64> = (0..self.subspace_dim())
            .map(|j| (0..z.len()).map(|i| self.u[(i, j)] * z[i]).sum())
            .collect();
        self.u.mul_vec(&coords)
    }

    /// Projects every row of `features` (`n×d`) onto the subspace.
    pub fn project_rows(&self, features: &Matrix) -> Result<Matrix> {
        // Z U Uᵀ
        let coords = features.matmul(&self.u)?;
        coords.matmul_t(&self.u)
    }

    /// `UR` for a square `R`; stays on the manifold when `R` is orthogonal.
    pub fn right_multiply(&self, r: &Matrix) -> Result<StiefelPoint> {
        StiefelPoint::new(self.u.matmul(r)?)
    }
}

fn check_dims(d: usize, s: usize) -> Result<()> {
    if s == 0 || s > d {
        return Err(Error::invalid(format!(
            "subspace dimension {s} must lie in 1..={d}"
        )));
    }
    Ok(())
}

/// `‖UᵀU − I‖_F`.
pub fn orthonormality_error(u: &Matrix) -> f64 {
    let g = gram(u);
    let s = g.rows();
    let mut acc = 0.0;
    for i in 0..s {
        for j in 0..s {
            let target = if i == j { 1.0 } else { 0.0 };
            acc += (g[(i, j)] - target).powi(2);
        }
    }
    acc.sqrt()
}

fn gram(u: &Matrix) -> Matrix {
    u.t_matmul(u).expect("UᵀU is always defined")
}

/// An element of the tangent space at some base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    xi: Matrix,
}

impl TangentVector {
    pub fn matrix(&self) -> &Matrix {
        &self.xi
    }

    pub fn into_matrix(self) -> Matrix {
        self.xi
    }

    pub fn norm(&self) -> f64 {
        self.xi.frobenius_norm()
    }

    pub fn scaled(&self, c: f64) -> TangentVector {
        TangentVector {
            xi: self.xi.scaled(c),
        }
    }

    /// `‖Uᵀξ + ξᵀU‖_F`, zero for an exact tangent vector at `U`.
    pub fn tangency_error(&self, base: &StiefelPoint) -> f64 {
        let utx = base.u.t_matmul(&self.xi).expect("shapes checked on construction");
        let sym = utx.add(&utx.transpose()).expect("square");
        sym.frobenius_norm()
    }
}

/// Projects an ambient `d×s` matrix onto the tangent space at `U`:
/// `ξ = G − U·sym(UᵀG)`.
pub fn tangent_project(u: &StiefelPoint, g: &Matrix) -> Result<TangentVector> {
    if g.shape() != u.u.shape() {
        return Err(Error::invalid(format!(
            "tangent_project: {}x{} matrix at a {}x{} point",
            g.rows(),
            g.cols(),
            u.u.rows(),
            u.u.cols()
        )));
    }
    let sym = u.u.t_matmul(g)?.symmetric_part()?;
    let mut xi = g.clone();
    xi.axpy(-1.0, &u.u.matmul(&sym)?)?;
    Ok(TangentVector { xi })
}

/// QR retraction: the sign-fixed `Q` factor of `U + ξ`.
///
/// A zero tangent vector returns `U` unchanged.
pub fn retract_qr(u: &StiefelPoint, xi: &TangentVector) -> Result<StiefelPoint> {
    if xi.xi.shape() != u.u.shape() {
        return Err(Error::invalid("retract_qr: tangent vector shape mismatch"));
    }
    if xi.xi.as_slice().iter().all(|v| *v == 0.0) {
        return Ok(u.clone());
    }
    let moved = u.u.add(&xi.xi)?;
    let q = thin_q(&moved)?;
    let point = StiefelPoint { u: q };
    let dev = point.orthonormality_error();
    if !(dev <= ORTHONORMALITY_TOL) {
        return Err(Error::NumericalFailure(format!(
            "retraction left the manifold: ‖UᵀU − I‖_F = {dev:.3e}"
        )));
    }
    Ok(point)
}

/// Orthonormalized standard-Gaussian `d×s` frame, deterministic per seed.
pub fn random_stiefel(d: usize, s: usize, seed: u64) -> Result<StiefelPoint> {
    check_dims(d, s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(d, s, |_, _| StandardNormal.sample(&mut rng));
    let (q, _) = thin_qr(&g)?;
    Ok(StiefelPoint { u: q })
}

/// The top-`s` eigenvectors of `sigma` as a frame.
pub fn pca_init(sigma: &SymmetricMatrix, s: usize) -> Result<StiefelPoint> {
    check_dims(sigma.dim(), s)?;
    let eig = sym_eig(sigma)?;
    StiefelPoint::new(eig.top(s))
}

//! The subspace unlearning objective
//!
//! ```text
//! J(U) = J_fg + J_rm (+ J_fgp)
//! J_fg  = (Tr(Uᵀ Σ_fg U) / Tr Σ_fg)²
//! J_rm  = (Tr(Σ_rm − UUᵀ Σ_rm UUᵀ) / Tr Σ_rm)²
//! J_fgp = (Tr(Uᵀ Σ_fgp U) / Tr Σ_fgp)²          (continual rounds only)
//! ```
//!
//! `J_fg` measures how much forgetting-set variance the subspace keeps and
//! `J_rm` how much remaining-set variance it loses. All terms are written for
//! a general `d×s` matrix so that the gradient is valid off the manifold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{sym_eig, Matrix, SymmetricMatrix};
use crate::stiefel::StiefelPoint;

/// Which terms of the objective are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Full objective.
    #[default]
    None,
    /// Drop `J_rm`: only the forgetting terms (`J_fg`, and `J_fgp` when
    /// present) are minimized.
    DropRemain,
    /// Drop `J_fg` and `J_fgp`: only `J_rm` is minimized.
    DropForget,
}

impl Ablation {
    fn forget_active(self) -> bool {
        self != Ablation::DropForget
    }

    fn remain_active(self) -> bool {
        self != Ablation::DropRemain
    }
}

/// The covariances the objective is built from.
#[derive(Debug, Clone)]
pub struct ObjectiveInputs {
    forget: SymmetricMatrix,
    remain: SymmetricMatrix,
    previous: Option<SymmetricMatrix>,
    forget_trace: f64,
    remain_trace: f64,
    previous_trace: Option<f64>,
    ablation: Ablation,
}

impl ObjectiveInputs {
    pub fn new(forget: SymmetricMatrix, remain: SymmetricMatrix) -> Result<Self> {
        let forget_trace = positive_trace(&forget, "forgetting")?;
        let remain_trace = positive_trace(&remain, "remaining")?;
        if forget.dim() != remain.dim() {
            return Err(Error::invalid(format!(
                "forgetting covariance is {0}x{0} but remaining is {1}x{1}",
                forget.dim(),
                remain.dim()
            )));
        }
        Ok(ObjectiveInputs {
            forget,
            remain,
            previous: None,
            forget_trace,
            remain_trace,
            previous_trace: None,
            ablation: Ablation::None,
        })
    }

    /// Adds the pooled covariance of data forgotten in earlier rounds.
    pub fn with_previous(mut self, previous: SymmetricMatrix) -> Result<Self> {
        let trace = positive_trace(&previous, "previously forgotten")?;
        if previous.dim() != self.dim() {
            return Err(Error::invalid(format!(
                "previously forgotten covariance is {0}x{0}, expected {1}x{1}",
                previous.dim(),
                self.dim()
            )));
        }
        self.previous = Some(previous);
        self.previous_trace = Some(trace);
        Ok(self)
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    pub fn dim(&self) -> usize {
        self.forget.dim()
    }

    pub fn forget(&self) -> &SymmetricMatrix {
        &self.forget
    }

    pub fn remain(&self) -> &SymmetricMatrix {
        &self.remain
    }

    pub fn previous(&self) -> Option<&SymmetricMatrix> {
        self.previous.as_ref()
    }

    pub fn ablation(&self) -> Ablation {
        self.ablation
    }
}

fn positive_trace(m: &SymmetricMatrix, which: &str) -> Result<f64> {
    let t = m.trace();
    if !(t > 0.0) {
        return Err(Error::DegenerateCovariance(format!(
            "{which} covariance has trace {t:e}"
        )));
    }
    Ok(t)
}

/// Objective value with its terms. `total` sums the terms that are active
/// under the inputs' ablation; inactive terms are still reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub forget: f64,
    pub remain: f64,
    pub previous: Option<f64>,
}

/// Normalized traces behind each term, before squaring.
#[derive(Debug, Clone, Copy)]
struct Ratios {
    forget: f64,
    remain: f64,
    previous: Option<f64>,
}

impl Ratios {
    /// On the manifold every ratio lies in [0, 1]; this removes the last-ulp
    /// excursions that round-off produces at s = d or on a null space.
    fn clamped(self) -> Ratios {
        let c = |r: f64| r.clamp(0.0, 1.0);
        Ratios {
            forget: c(self.forget),
            remain: c(self.remain),
            previous: self.previous.map(c),
        }
    }

    fn value(&self, ablation: Ablation) -> ObjectiveValue {
        let forget = self.forget * self.forget;
        let remain = self.remain * self.remain;
        let previous = self.previous.map(|t| t * t);
        let mut total = 0.0;
        if ablation.forget_active() {
            total += forget + previous.unwrap_or(0.0);
        }
        if ablation.remain_active() {
            total += remain;
        }
        ObjectiveValue {
            total,
            forget,
            remain,
            previous,
        }
    }
}

// Products of U shared by the value and the gradient.
struct Products {
    forget_u: Matrix,
    remain_u: Matrix,
    previous_u: Option<Matrix>,
    gram: Matrix,
    remain_quad: Matrix,
    ratios: Ratios,
}

fn products(u: &Matrix, inputs: &ObjectiveInputs) -> Result<Products> {
    if u.rows() != inputs.dim() {
        return Err(Error::invalid(format!(
            "frame has {} rows but covariances are {}x{}",
            u.rows(),
            inputs.dim(),
            inputs.dim()
        )));
    }
    let forget_u = inputs.forget.as_matrix().matmul(u)?;
    let remain_u = inputs.remain.as_matrix().matmul(u)?;
    let previous_u = match &inputs.previous {
        Some(p) => Some(p.as_matrix().matmul(u)?),
        None => None,
    };
    let gram = u.t_matmul(u)?;
    let remain_quad = u.t_matmul(&remain_u)?;

    let forget = u.frobenius_dot(&forget_u)? / inputs.forget_trace;
    // Tr(UUᵀΣUUᵀ) = Tr(UᵀU · UᵀΣU)
    let kept = gram.frobenius_dot(&remain_quad)?;
    let remain = (inputs.remain_trace - kept) / inputs.remain_trace;
    let previous = match (&previous_u, inputs.previous_trace) {
        (Some(pu), Some(t)) => Some(u.frobenius_dot(pu)? / t),
        _ => None,
    };
    Ok(Products {
        forget_u,
        remain_u,
        previous_u,
        gram,
        remain_quad,
        ratios: Ratios {
            forget,
            remain,
            previous,
        },
    })
}

fn gradient(u: &Matrix, inputs: &ObjectiveInputs, p: &Products) -> Result<Matrix> {
    let mut g = Matrix::zeros(u.rows(), u.cols());
    let ablation = inputs.ablation;
    if ablation.forget_active() {
        g.axpy(4.0 * p.ratios.forget / inputs.forget_trace, &p.forget_u)?;
        if let (Some(pu), Some(t), Some(r)) =
            (&p.previous_u, inputs.previous_trace, p.ratios.previous)
        {
            g.axpy(4.0 * r / t, pu)?;
        }
    }
    if ablation.remain_active() {
        // ∂/∂U Tr(UUᵀΣUUᵀ) = 2(ΣUUᵀU + UUᵀΣU)
        let c = -4.0 * p.ratios.remain / inputs.remain_trace;
        g.axpy(c, &p.remain_u.matmul(&p.gram)?)?;
        g.axpy(c, &u.matmul(&p.remain_quad)?)?;
    }
    Ok(g)
}

/// Objective at an arbitrary `d×s` matrix (not required to be orthonormal).
pub fn eval_objective_at(u: &Matrix, inputs: &ObjectiveInputs) -> Result<ObjectiveValue> {
    Ok(products(u, inputs)?.ratios.value(inputs.ablation))
}

/// Objective at a point of the manifold.
pub fn eval_objective(u: &StiefelPoint, inputs: &ObjectiveInputs) -> Result<ObjectiveValue> {
    Ok(products(u.matrix(), inputs)?.ratios.clamped().value(inputs.ablation))
}

/// Ambient Euclidean gradient of [`eval_objective_at`] with respect to the
/// raw entries of `u`.
pub fn euclid_grad_at(u: &Matrix, inputs: &ObjectiveInputs) -> Result<Matrix> {
    let p = products(u, inputs)?;
    gradient(u, inputs, &p)
}

pub fn euclid_grad(u: &StiefelPoint, inputs: &ObjectiveInputs) -> Result<Matrix> {
    euclid_grad_at(u.matrix(), inputs)
}

/// Value and gradient from one set of products.
pub fn value_and_grad(u: &StiefelPoint, inputs: &ObjectiveInputs) -> Result<(ObjectiveValue, Matrix)> {
    let p = products(u.matrix(), inputs)?;
    let g = gradient(u.matrix(), inputs, &p)?;
    Ok((p.ratios.clamped().value(inputs.ablation), g))
}

/// Closed-form minimizer of `Tr(UᵀMU)` over `St(dim, m)`: the eigenvectors of
/// the `m` smallest eigenvalues, and the sum of those eigenvalues.
pub fn trace_minimizer(mat: &SymmetricMatrix, m: usize) -> Result<(StiefelPoint, f64)> {
    if m == 0 || m > mat.dim() {
        return Err(Error::invalid(format!(
            "frame size {m} must lie in 1..={}",
            mat.dim()
        )));
    }
    let eig = sym_eig(mat)?;
    let value = eig.eigenvalues.iter().rev().take(m).sum();
    Ok((StiefelPoint::new(eig.bottom(m))?, value))
}

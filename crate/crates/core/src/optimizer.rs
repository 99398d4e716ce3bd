//! Riemannian Adam on `St(d, s)`.
//!
//! Each step projects the Euclidean gradient (plus weight decay) onto the
//! tangent space, updates Adam moments on the ambient coordinates of that
//! tangent vector, re-projects the resulting direction, retracts with QR and
//! finally transports the first moment to the new point by projection.

use std::fmt;
use web_time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::objective::{value_and_grad, ObjectiveInputs, ObjectiveValue};
use crate::stiefel::{pca_init, random_stiefel, retract_qr, tangent_project, StiefelPoint, TangentVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate towards zero over the budget.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    /// Top eigenvectors of the remaining-set covariance.
    #[default]
    Pca,
    /// Orthonormalized Gaussian frame drawn from `seed`.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub init: Init,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1.0,
            weight_decay: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 50,
            schedule: Schedule::Constant,
            seed: 0,
            init: Init::Pca,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !self.weight_decay.is_finite() {
            return Err(Error::invalid("weight decay must be finite"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("at least one step is required"));
        }
        Ok(())
    }

    /// Step size for the 1-based step `t`.
    pub fn learning_rate_at(&self, t: u64) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Cosine => {
                let progress = (t.saturating_sub(1)) as f64 / self.steps as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}

/// Adam moments. `first_moment` is kept tangent at the current point.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Matrix,
    pub second_moment: Matrix,
}

impl OptimizerState {
    pub fn new(d: usize, s: usize) -> Self {
        OptimizerState {
            step: 0,
            first_moment: Matrix::zeros(d, s),
            second_moment: Matrix::zeros(d, s),
        }
    }
}

/// One Riemannian Adam step from `u`.
pub fn adam_step(
    u: &StiefelPoint,
    state: &OptimizerState,
    inputs: &ObjectiveInputs,
    config: &OptimizerConfig,
) -> Result<(StiefelPoint, OptimizerState)> {
    if state.first_moment.shape() != u.matrix().shape() || state.second_moment.shape() != u.matrix().shape() {
        return Err(Error::invalid("optimizer state does not match the point"));
    }
    let (value, grad) = value_and_grad(u, inputs)?;
    check_finite(&value)?;
    let xi = riemannian_direction(u, &grad, config.weight_decay)?;
    let mut next = state.clone();
    let point = apply_update(u, &mut next, &xi, config)?;
    Ok((point, next))
}

fn check_finite(value: &ObjectiveValue) -> Result<()> {
    if value.total.is_finite() && value.forget.is_finite() && value.remain.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericalFailure(format!(
            "objective is not finite: {value:?}"
        )))
    }
}

fn riemannian_direction(u: &StiefelPoint, grad: &Matrix, weight_decay: f64) -> Result<TangentVector> {
    let mut g = grad.clone();
    if weight_decay != 0.0 {
        g.axpy(weight_decay, u.matrix())?;
    }
    tangent_project(u, &g)
}

fn apply_update(
    u: &StiefelPoint,
    state: &mut OptimizerState,
    xi: &TangentVector,
    config: &OptimizerConfig,
) -> Result<StiefelPoint> {
    state.step += 1;
    let t = state.step;
    let (b1, b2) = (config.beta1, config.beta2);
    let g = xi.matrix().as_slice();
    for (m, gi) in state.first_moment.as_mut_slice().iter_mut().zip(g) {
        *m = b1 * *m + (1.0 - b1) * gi;
    }
    for (v, gi) in state.second_moment.as_mut_slice().iter_mut().zip(g) {
        *v = b2 * *v + (1.0 - b2) * gi * gi;
    }
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    let mut direction = state.first_moment.clone();
    for (dir, v) in direction.as_mut_slice().iter_mut().zip(state.second_moment.as_slice()) {
        *dir = (*dir / c1) / ((v / c2).sqrt() + config.epsilon);
    }
    let step = tangent_project(u, &direction)?.scaled(-config.learning_rate_at(t));
    let next = retract_qr(u, &step).map_err(|e| match e {
        Error::DegenerateDirection { column, norm } => Error::NumericalFailure(format!(
            "step {t} failed: retraction degenerate in column {column} (norm {norm:.3e})"
        )),
        other => other,
    })?;
    state.first_moment = tangent_project(&next, &state.first_moment)?.into_matrix();
    Ok(next)
}

/// Objective and gradient norm at one iterate. Step 0 is the initial point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub objective: ObjectiveValue,
    pub grad_norm: f64,
    /// `‖UᵀU − I‖_F` of the iterate.
    pub orthonormality_error: f64,
    pub elapsed_secs: f64,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} J={:.9e} J_fg={:.9e} J_rm={:.9e}",
            self.step, self.objective.total, self.objective.forget, self.objective.remain
        )?;
        if let Some(p) = self.objective.previous {
            write!(f, " J_fgp={p:.9e}")?;
        }
        write!(
            f,
            " grad_norm={:.6e} orth={:.3e} t={:.6}",
            self.grad_norm, self.orthonormality_error, self.elapsed_secs
        )
    }
}

/// Per-iterate log of a fit: the initial point followed by one record per
/// executed step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub records: Vec<StepRecord>,
}

impl FitTrace {
    pub fn executed_steps(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn initial(&self) -> Option<&StepRecord> {
        self.records.first()
    }

    pub fn best(&self) -> Option<&StepRecord> {
        self.records
            .iter()
            .min_by(|a, b| a.objective.total.total_cmp(&b.objective.total))
    }

    /// One line per record.
    pub fn to_log(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Iterate with the lowest objective seen.
    pub point: StiefelPoint,
    pub best_step: usize,
    pub value: ObjectiveValue,
    pub trace: FitTrace,
}

/// A fit that stopped early; carries the records gathered so far.
#[derive(Debug, thiserror::Error)]
#[error("fit aborted after {} steps: {error}", .trace.executed_steps())]
pub struct FitError {
    #[source]
    pub error: Error,
    pub trace: FitTrace,
}

/// Initial frame for `config.init`.
pub fn initial_point(inputs: &ObjectiveInputs, config: &OptimizerConfig, s: usize) -> Result<StiefelPoint> {
    match config.init {
        Init::Pca => pca_init(inputs.remain(), s),
        Init::Random => random_stiefel(inputs.dim(), s, config.seed),
    }
}

/// Runs the configured number of steps and returns the best iterate.
pub fn fit(inputs: &ObjectiveInputs, config: &OptimizerConfig, s: usize) -> std::result::Result<FitOutcome, FitError> {
    let start = initial_point(inputs, config, s).map_err(|error| FitError {
        error,
        trace: FitTrace::default(),
    })?;
    fit_from(inputs, config, start)
}

/// [`fit`] from a given starting frame.
pub fn fit_from(
    inputs: &ObjectiveInputs,
    config: &OptimizerConfig,
    start: StiefelPoint,
) -> std::result::Result<FitOutcome, FitError> {
    let clock = Instant::now();
    let mut trace = FitTrace::default();
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(FitError { error, trace }),
            }
        };
    }
    bail!(config.validate());
    if start.ambient_dim() != inputs.dim() {
        bail!(Err(Error::invalid(format!(
            "starting frame is {}-dimensional, covariances are {}-dimensional",
            start.ambient_dim(),
            inputs.dim()
        ))));
    }

    let mut state = OptimizerState::new(start.ambient_dim(), start.subspace_dim());
    let mut u = start;
    let mut best: Option<(StiefelPoint, usize, ObjectiveValue)> = None;
    for t in 0..=config.steps {
        let (value, grad) = bail!(value_and_grad(&u, inputs));
        bail!(check_finite(&value));
        let xi = bail!(riemannian_direction(&u, &grad, config.weight_decay));
        trace.records.push(StepRecord {
            step: t,
            objective: value,
            grad_norm: xi.norm(),
            orthonormality_error: u.orthonormality_error(),
            elapsed_secs: clock.elapsed().as_secs_f64(),
        });
        if best.as_ref().map_or(true, |(_, _, b)| value.total < b.total) {
            best = Some((u.clone(), t, value));
        }
        if t == config.steps {
            break;
        }
        u = bail!(apply_update(&u, &mut state, &xi, config));
    }
    let (point, best_step, value) = best.expect("at least the initial point is recorded");
    Ok(FitOutcome {
        point,
        best_step,
        value,
        trace,
    })
}

//! Browser demo. Each exported function runs one synthetic experiment end to
//! end and hands the result to JavaScript as a JSON string.

use loft_core::analysis::{select_dim, separability_report, spectrum, DEFAULT_VARIANCE_FRACTION};
use loft_core::dataio::{Regime, SyntheticModel, SyntheticScenario, SyntheticSplit};
use loft_core::evaluator::{accuracy, mia_score, probe_train, LinearHead, MetricsTable, ProbeConfig};
use loft_core::matcore::{covariance, Centering};
use loft_core::objective::{Ablation, ObjectiveInputs};
use loft_core::optimizer::{fit, OptimizerConfig};
use loft_core::stiefel::StiefelPoint;
use loft_core::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SPECTRUM_TOP_K: usize = 12;
const TRAIN_PER_CLASS: usize = 200;
const TEST_PER_CLASS: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct SpectraReport {
    pub remain: Vec<f64>,
    pub forget: Vec<f64>,
    /// Mean reconstruction error of forgetting over remaining samples in the
    /// top subspace of the remaining set.
    pub error_ratio: f64,
    pub subspace_dim: usize,
}

/// Normalized top eigenvalues of both splits' centered covariances.
pub fn run_spectra(regime: Regime, seed: u64, per_class: usize) -> Result<SpectraReport> {
    let scenario = SyntheticScenario {
        seed,
        per_class,
        ..SyntheticScenario::new(regime)
    };
    let data = SyntheticModel::new(&scenario)?.sample(per_class, 0)?;
    let rm = covariance(data.remain.values(), Centering::Centered)?;
    let fg = covariance(data.forget.values(), Centering::Centered)?;
    let sep = separability_report(data.remain.values(), data.forget.values(), scenario.top_dim)?;
    Ok(SpectraReport {
        remain: spectrum(rm.matrix(), SPECTRUM_TOP_K)?.normalized_eigenvalues,
        forget: spectrum(fg.matrix(), SPECTRUM_TOP_K)?.normalized_eigenvalues,
        error_ratio: sep.error_ratio,
        subspace_dim: scenario.top_dim,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TracePoint {
    pub step: usize,
    pub total: f64,
    pub forget: f64,
    pub remain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnlearnReport {
    pub subspace_dim: usize,
    pub best_step: usize,
    pub trace: Vec<TracePoint>,
    pub baseline: MetricsTable,
    pub unlearned: MetricsTable,
}

fn scenario(seed: u64) -> SyntheticScenario {
    SyntheticScenario {
        seed,
        per_class: TRAIN_PER_CLASS,
        ..SyntheticScenario::new(Regime::Exact)
    }
}

fn metrics(head: &LinearHead, u: Option<&StiefelPoint>, train: &SyntheticSplit, test: &SyntheticSplit) -> Result<MetricsTable> {
    let acc = |f: &loft_core::dataio::FeatureMatrix| accuracy(head, u, f.values(), f.require_labels("accuracy")?);
    Ok(MetricsTable::new(
        acc(&train.remain)?,
        acc(&train.forget)?,
        acc(&test.remain)?,
        acc(&test.forget)?,
        mia_score(head, u, train.forget.values(), train.remain.values(), test.remain.values())?,
    ))
}

/// Forgets the two last classes of the exact-regime scenario: trains a probe
/// on every class, fits a projector from uncentered covariances and reports
/// the objective per step with metrics before and after.
pub fn run_unlearn(seed: u64, steps: usize, learning_rate: f64, ablation: Ablation) -> Result<UnlearnReport> {
    let model = SyntheticModel::new(&scenario(seed))?;
    let train = model.sample(TRAIN_PER_CLASS, 0)?;
    let test = model.sample(TEST_PER_CLASS, 1)?;
    let all = train.remain.concat(&train.forget)?;
    let head = probe_train(all.values(), all.require_labels("probe")?, None, &ProbeConfig::default())?;

    let rm = covariance(train.remain.values(), Centering::Uncentered)?;
    let fg = covariance(train.forget.values(), Centering::Uncentered)?;
    let s = select_dim(&rm, DEFAULT_VARIANCE_FRACTION)?;
    let inputs = ObjectiveInputs::new(fg.matrix().clone(), rm.matrix().clone())?.with_ablation(ablation);
    let config = OptimizerConfig {
        steps,
        learning_rate,
        ..OptimizerConfig::default()
    };
    let outcome = fit(&inputs, &config, s).map_err(|e| e.error)?;
    Ok(UnlearnReport {
        subspace_dim: s,
        best_step: outcome.best_step,
        trace: outcome
            .trace
            .records
            .iter()
            .map(|r| TracePoint {
                step: r.step,
                total: r.objective.total,
                forget: r.objective.forget,
                remain: r.objective.remain,
            })
            .collect(),
        baseline: metrics(&head, None, &train, &test)?,
        unlearned: metrics(&head, Some(&outcome.point), &train, &test)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorsReport {
    pub subspace_dim: usize,
    pub remain: Vec<f64>,
    pub forget: Vec<f64>,
    pub error_ratio: f64,
}

/// Per-sample reconstruction errors of both splits in the top-`dim`
/// subspace of the remaining set.
pub fn run_errors(regime: Regime, seed: u64, dim: usize) -> Result<ErrorsReport> {
    let data = SyntheticModel::new(&SyntheticScenario {
        seed,
        ..SyntheticScenario::new(regime)
    })?
    .sample(TRAIN_PER_CLASS, 0)?;
    let sep = separability_report(data.remain.values(), data.forget.values(), dim)?;
    Ok(ErrorsReport {
        subspace_dim: dim,
        remain: sep.remain.errors,
        forget: sep.forget.errors,
        error_ratio: sep.error_ratio,
    })
}

fn parse_regime(name: &str) -> Result<Regime> {
    match name {
        "exact" => Ok(Regime::Exact),
        "pretrained" => Ok(Regime::Pretrained),
        other => Err(Error::InvalidInput(format!("unknown regime {other:?}"))),
    }
}

fn parse_ablation(name: &str) -> Result<Ablation> {
    match name {
        "" | "none" => Ok(Ablation::None),
        "rm" => Ok(Ablation::DropRemain),
        "fg" => Ok(Ablation::DropForget),
        other => Err(Error::InvalidInput(format!("unknown ablation {other:?}"))),
    }
}

fn to_json<T: Serialize>(value: Result<T>) -> std::result::Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// `{remain, forget, error_ratio, subspace_dim}` for `"exact"` or
/// `"pretrained"`.
#[wasm_bindgen]
pub fn spectra(regime: &str, seed: u32, per_class: u32) -> std::result::Result<String, JsError> {
    to_json(parse_regime(regime).and_then(|r| run_spectra(r, seed.into(), per_class as usize)))
}

/// `{subspace_dim, best_step, trace, baseline, unlearned}`. `ablate` is
/// `"none"`, `"rm"` (forgetting terms only) or `"fg"` (retention only).
#[wasm_bindgen]
pub fn unlearn(seed: u32, steps: u32, learning_rate: f64, ablate: &str) -> std::result::Result<String, JsError> {
    to_json(parse_ablation(ablate).and_then(|a| run_unlearn(seed.into(), steps as usize, learning_rate, a)))
}

/// `{subspace_dim, remain, forget, error_ratio}`.
#[wasm_bindgen]
pub fn subspace_errors(regime: &str, seed: u32, dim: u32) -> std::result::Result<String, JsError> {
    to_json(parse_regime(regime).and_then(|r| run_errors(r, seed.into(), dim as usize)))
}

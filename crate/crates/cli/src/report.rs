use std::fs;
use std::path::{Path, PathBuf};

use loft_core::evaluator::MetricsTable;
use loft_core::objective::{Ablation, ObjectiveValue};
use loft_core::optimizer::{FitTrace, OptimizerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything needed to reproduce and audit one `fit` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: FitConfigEcho,
    pub inputs: Vec<InputDigest>,
    pub trace: TraceSummary,
    #[serde(rename = "final")]
    pub final_value: ObjectiveValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsTable>,
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    /// Entries of the optimized `d×s` frame.
    pub parameters: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfigEcho {
    pub cov_rm: PathBuf,
    pub cov_fg: PathBuf,
    pub cov_fgp: Option<PathBuf>,
    pub projector: PathBuf,
    /// `"flag"` when `--dim` was given, otherwise `"variance-fraction"`.
    pub dim_source: String,
    pub variance_fraction: Option<f64>,
    pub ablation: Ablation,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(role: &str, path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Ok(InputDigest {
            role: role.to_owned(),
            path: path.to_owned(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub initial: ObjectiveValue,
    pub last: ObjectiveValue,
    pub best_step: usize,
    pub last_grad_norm: f64,
    pub max_orthonormality_error: f64,
}

impl TraceSummary {
    /// `None` for an empty trace.
    pub fn of(trace: &FitTrace, best_step: usize) -> Option<Self> {
        let initial = trace.initial()?;
        let last = trace.records.last()?;
        Some(TraceSummary {
            steps: trace.executed_steps(),
            initial: initial.objective,
            last: last.objective,
            best_step,
            last_grad_norm: last.grad_norm,
            max_orthonormality_error: trace
                .records
                .iter()
                .map(|r| r.orthonormality_error)
                .fold(0.0, f64::max),
        })
    }
}

impl RunReport {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| loft_core::Error::from(e).at_path(path).into())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(loft_core::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

//! File formats, CSV ingestion and the synthetic feature generator.

mod binary;
mod csv_input;
mod synth;

pub use binary::{
    decode_fcov, decode_fmat, decode_fprj, decode_head, encode_fcov, encode_fmat, encode_fprj, encode_head, read_fcov,
    read_fmat, read_fprj, read_head, write_fcov, write_fmat, write_fprj, write_head, FCOV_MAGIC, FMAT_MAGIC,
    FPRJ_MAGIC,
};
pub use csv_input::{read_csv, read_csv_from};
pub use synth::{synth, Regime, SyntheticModel, SyntheticScenario, SyntheticSplit};

use std::path::Path;

use crate::error::{Error, Result};
use crate::matcore::Matrix;

/// A feature matrix with one sample per row and optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Matrix,
    labels: Option<Vec<u32>>,
}

impl FeatureMatrix {
    pub fn new(values: Matrix, labels: Option<Vec<u32>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != values.rows() {
                return Err(Error::invalid(format!(
                    "{} labels for {} samples",
                    l.len(),
                    values.rows()
                )));
            }
        }
        Ok(FeatureMatrix { values, labels })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    /// Labels, or an error naming what they were needed for.
    pub fn require_labels(&self, purpose: &str) -> Result<&[u32]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::invalid(format!("{purpose} needs labelled features")))
    }

    pub fn samples(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn into_parts(self) -> (Matrix, Option<Vec<u32>>) {
        (self.values, self.labels)
    }

    /// Rows whose label satisfies `keep`, in their original order.
    pub fn filter_labels(&self, keep: impl Fn(u32) -> bool) -> Result<FeatureMatrix> {
        let labels = self.require_labels("filtering by class")?;
        let rows: Vec<usize> = (0..labels.len()).filter(|i| keep(labels[*i])).collect();
        if rows.is_empty() {
            return Err(Error::invalid("no samples left after filtering by class"));
        }
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &i in &rows {
            data.extend_from_slice(self.values.row(i));
        }
        FeatureMatrix::new(
            Matrix::from_vec(rows.len(), d, data)?,
            Some(rows.iter().map(|i| labels[*i]).collect()),
        )
    }

    /// Stacks two matrices of the same width; labels survive only when both
    /// have them.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::invalid(format!(
                "cannot stack {}-dimensional and {}-dimensional features",
                self.dim(),
                other.dim()
            )));
        }
        let mut data = self.values.as_slice().to_vec();
        data.extend_from_slice(other.values.as_slice());
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        FeatureMatrix::new(
            Matrix::from_vec(self.samples() + other.samples(), self.dim(), data)?,
            labels,
        )
    }
}

/// Reads features from FMAT, or from CSV when the extension is `.csv`.
/// CSV input is expected to have a header and an optional `label` column.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        csv_input::read_csv_spec(path, true, Some(csv_input::LabelSpec::IfPresent("label")))
    } else {
        read_fmat(path)
    }
}

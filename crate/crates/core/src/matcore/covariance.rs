use serde::{Deserialize, Serialize};

use super::matrix::{Matrix, SymmetricMatrix};
use crate::error::{Error, Result};

/// Whether the per-feature mean is subtracted before forming second moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Centering {
    #[default]
    Centered,
    Uncentered,
}

/// A `d×d` covariance (or second-moment) matrix together with the statistics
/// needed to pool it with others.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSummary {
    matrix: SymmetricMatrix,
    trace: f64,
    count: u64,
    mean: Vec<f64>,
}

impl CovarianceSummary {
    pub fn new(matrix: SymmetricMatrix, count: u64, mean: Vec<f64>) -> Result<Self> {
        if mean.len() != matrix.dim() {
            return Err(Error::invalid(format!(
                "mean of length {} for a {}-dimensional covariance",
                mean.len(),
                matrix.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite mean"));
        }
        let trace = matrix.trace();
        Ok(CovarianceSummary {
            matrix,
            trace,
            count,
            mean,
        })
    }

    pub fn matrix(&self) -> &SymmetricMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Pools several summaries into the summary of the union of their
    /// samples, weighting each part by its sample count. `centering` states
    /// how the parts were computed.
    pub fn merge(parts: &[CovarianceSummary], centering: Centering) -> Result<CovarianceSummary> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("nothing to merge"))?;
        let mut acc = CovarianceAccumulator::from_summary(first, centering);
        for part in &parts[1..] {
            acc.merge(&CovarianceAccumulator::from_summary(part, centering))?;
        }
        acc.finish()
    }
}

/// Single-pass accumulator for covariance or second-moment matrices.
///
/// The centered mode uses Welford's update so the mean never has to be known
/// in advance; only the upper triangle is accumulated.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    dim: usize,
    centering: Centering,
    count: u64,
    mean: Vec<f64>,
    // upper triangle, row-major over the full d×d layout
    moment: Vec<f64>,
    scratch: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize, centering: Centering) -> Self {
        assert!(dim > 0, "zero-dimensional covariance");
        CovarianceAccumulator {
            dim,
            centering,
            count: 0,
            mean: vec![0.0; dim],
            moment: vec![0.0; dim * dim],
            scratch: vec![0.0; dim],
        }
    }

    fn from_summary(s: &CovarianceSummary, centering: Centering) -> Self {
        let d = s.dim();
        let n = s.count as f64;
        let mut acc = CovarianceAccumulator::new(d, centering);
        acc.count = s.count;
        acc.mean = s.mean.clone();
        for i in 0..d {
            for j in i..d {
                acc.moment[i * d + j] = s.matrix[(i, j)] * n;
            }
        }
        acc
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        let d = self.dim;
        if row.len() != d {
            return Err(Error::invalid(format!(
                "sample of length {} for a {d}-dimensional accumulator",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry in sample {}",
                self.count
            )));
        }
        self.count += 1;
        let n = self.count as f64;
        match self.centering {
            Centering::Centered => {
                for ((delta, m), x) in self.scratch.iter_mut().zip(&mut self.mean).zip(row) {
                    *delta = x - *m;
                    *m += *delta / n;
                }
                // (x - μ_old)(x - μ_new)ᵀ = (n-1)/n · δδᵀ
                let w = (n - 1.0) / n;
                for i in 0..d {
                    let di = w * self.scratch[i];
                    let out = &mut self.moment[i * d + i..(i + 1) * d];
                    for (o, dj) in out.iter_mut().zip(&self.scratch[i..]) {
                        *o += di * dj;
                    }
                }
            }
            Centering::Uncentered => {
                for (m, x) in self.mean.iter_mut().zip(row) {
                    *m += (x - *m) / n;
                }
                for i in 0..d {
                    let xi = row[i];
                    let out = &mut self.moment[i * d + i..(i + 1) * d];
                    for (o, xj) in out.iter_mut().zip(&row[i..]) {
                        *o += xi * xj;
                    }
                }
            }
        }
        Ok(())
    }

    /// Folds another accumulator into this one (parallel-combine form).
    pub fn merge(&mut self, other: &CovarianceAccumulator) -> Result<()> {
        if other.dim != self.dim || other.centering != self.centering {
            return Err(Error::invalid("merging incompatible covariance accumulators"));
        }
        if other.count == 0 {
            return Ok(());
        }
        let d = self.dim;
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        if self.centering == Centering::Centered {
            let w = na * nb / n;
            let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
            for i in 0..d {
                for j in i..d {
                    self.moment[i * d + j] += w * delta[i] * delta[j];
                }
            }
        }
        for (a, b) in self.moment.iter_mut().zip(&other.moment) {
            *a += b;
        }
        for (a, b) in self.mean.iter_mut().zip(&other.mean) {
            *a = (na * *a + nb * b) / n;
        }
        self.count += other.count;
        Ok(())
    }

    pub fn finish(&self) -> Result<CovarianceSummary> {
        if self.count == 0 {
            return Err(Error::invalid("covariance of zero samples"));
        }
        let d = self.dim;
        let n = self.count as f64;
        let mut m = Matrix::zeros(d, d);
        for i in 0..d {
            for j in i..d {
                let v = self.moment[i * d + j] / n;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        CovarianceSummary::new(SymmetricMatrix::from_matrix(&m)?, self.count, self.mean.clone())
    }
}

/// Covariance (population divisor `1/n`) of the rows of `features`, computed
/// in one streaming pass.
pub fn covariance(features: &Matrix, centering: Centering) -> Result<CovarianceSummary> {
    let mut acc = CovarianceAccumulator::new(features.cols(), centering);
    for i in 0..features.rows() {
        acc.push(features.row(i))?;
    }
    acc.finish()
}

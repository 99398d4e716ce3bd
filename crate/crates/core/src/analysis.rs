//! Feature-subspace diagnostics: eigenvalue spectra, PCA reconstruction
//! errors, explained-variance dimension selection and the separability of a
//! forgetting set from the principal subspace of the remaining set.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{covariance, norm2, sym_eig, Centering, CovarianceSummary, Matrix, SymmetricMatrix};
use crate::stiefel::{pca_init, StiefelPoint};

/// Default number of leading eigenvalues in a spectrum report.
pub const DEFAULT_TOP_K: usize = 12;

/// Default explained-variance fraction for choosing the subspace dimension.
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub k: usize,
    pub trace: f64,
    /// Leading eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `λ_i / λ_1` for the leading `k` eigenvalues.
    pub normalized_eigenvalues: Vec<f64>,
    /// Cumulative explained-variance fraction over the full spectrum.
    pub explained_variance_curve: Vec<f64>,
}

/// Leading-`k` spectrum of `sigma` normalized by its largest eigenvalue.
pub fn spectrum(sigma: &SymmetricMatrix, k: usize) -> Result<SpectrumReport> {
    if k == 0 || k > sigma.dim() {
        return Err(Error::invalid(format!(
            "k = {k} outside 1..={}",
            sigma.dim()
        )));
    }
    let eig = sym_eig(sigma)?;
    let lead = eig.eigenvalues[0];
    if !(lead > 0.0) {
        return Err(Error::DegenerateSpectrum(lead));
    }
    let trace = sigma.trace();
    let mut cum = 0.0;
    let curve = eig
        .eigenvalues
        .iter()
        .map(|l| {
            cum += l;
            (cum / trace).min(1.0)
        })
        .collect();
    let top: Vec<f64> = eig.eigenvalues[..k].to_vec();
    Ok(SpectrumReport {
        k,
        trace,
        normalized_eigenvalues: top.iter().map(|l| (l / lead).max(0.0)).collect(),
        eigenvalues: top,
        explained_variance_curve: curve,
    })
}

impl fmt::Display for SpectrumReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trace {:.6e}", self.trace)?;
        writeln!(f, "{:>4}  {:>14}  {:>10}  {:>10}", "i", "eigenvalue", "normalized", "cumulative")?;
        for i in 0..self.k {
            writeln!(
                f,
                "{:>4}  {:>14.6e}  {:>10.6}  {:>10.6}",
                i + 1,
                self.eigenvalues[i],
                self.normalized_eigenvalues[i],
                self.explained_variance_curve[i]
            )?;
        }
        Ok(())
    }
}

/// Smallest `s` whose leading eigenvalues explain at least `fraction` of the
/// trace.
pub fn select_dim(sigma: &CovarianceSummary, fraction: f64) -> Result<usize> {
    let eig = sym_eig(sigma.matrix())?;
    select_dim_from_eigenvalues(&eig.eigenvalues, fraction)
}

/// [`select_dim`] on eigenvalues sorted descending. Negative round-off
/// eigenvalues count as zero.
pub fn select_dim_from_eigenvalues(eigenvalues: &[f64], fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateCovariance("zero total variance".into()));
    }
    // relative slack absorbs round-off in the cumulative sum
    let target = fraction * total * (1.0 - 1e-12);
    let mut cum = 0.0;
    for (i, l) in eigenvalues.iter().enumerate() {
        cum += l.max(0.0);
        if cum >= target {
            return Ok(i + 1);
        }
    }
    Ok(eigenvalues.len())
}

/// Mean, median and maximum of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary {
                mean: 0.0,
                median: 0.0,
                max: 0.0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Summary {
            mean: values.iter().sum::<f64>() / n as f64,
            median,
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub subspace_dim: usize,
    /// `‖UUᵀz̄ − z̄‖₂` per sample.
    pub errors: Vec<f64>,
    /// `‖UUᵀz̄‖₂` per sample.
    pub projected_norms: Vec<f64>,
    pub error_summary: Summary,
    pub projected_summary: Summary,
}

/// Reconstruction errors of the rows of `features`, centered by `mean`.
pub fn reconstruction_errors(u: &StiefelPoint, features: &Matrix, mean: &[f64]) -> Result<ReconstructionReport> {
    let d = u.ambient_dim();
    if features.cols() != d || mean.len() != d {
        return Err(Error::invalid(format!(
            "features have {} columns and mean {} entries for a {d}-dimensional subspace",
            features.cols(),
            mean.len()
        )));
    }
    let centered = Matrix::from_fn(features.rows(), d, |i, j| features[(i, j)] - mean[j]);
    let projected = u.project_rows(&centered)?;
    let mut errors = Vec::with_capacity(features.rows());
    let mut norms = Vec::with_capacity(features.rows());
    for i in 0..features.rows() {
        let z = centered.row(i);
        let p = projected.row(i);
        let e: f64 = z.iter().zip(p).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt();
        errors.push(e);
        norms.push(norm2(p));
    }
    Ok(ReconstructionReport {
        subspace_dim: u.subspace_dim(),
        error_summary: Summary::of(&errors),
        projected_summary: Summary::of(&norms),
        errors,
        projected_norms: norms,
    })
}

/// How well the principal subspace of the remaining features separates them
/// from the forgetting features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub subspace_dim: usize,
    pub remain: ReconstructionReport,
    pub forget: ReconstructionReport,
    /// Mean forgetting error over mean remaining error.
    pub error_ratio: f64,
}

/// Fits the top-`s` principal subspace of `remain` and measures both splits
/// against it, centering both with the remaining-set mean.
pub fn separability_report(remain: &Matrix, forget: &Matrix, s: usize) -> Result<SeparabilityReport> {
    if remain.cols() != forget.cols() {
        return Err(Error::invalid(format!(
            "remaining features are {}-dimensional, forgetting features {}-dimensional",
            remain.cols(),
            forget.cols()
        )));
    }
    let cov = covariance(remain, Centering::Centered)?;
    let u = pca_init(cov.matrix(), s)?;
    let rm = reconstruction_errors(&u, remain, cov.mean())?;
    let fg = reconstruction_errors(&u, forget, cov.mean())?;
    let error_ratio = fg.error_summary.mean / rm.error_summary.mean;
    Ok(SeparabilityReport {
        subspace_dim: s,
        error_ratio,
        remain: rm,
        forget: fg,
    })
}

impl fmt::Display for SeparabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "subspace dimension {}", self.subspace_dim)?;
        writeln!(
            f,
            "{:<8} {:>8} {:>12} {:>12} {:>12} {:>14}",
            "split", "samples", "mean err", "median err", "max err", "mean proj"
        )?;
        for (name, r) in [("remain", &self.remain), ("forget", &self.forget)] {
            writeln!(
                f,
                "{:<8} {:>8} {:>12.6} {:>12.6} {:>12.6} {:>14.6}",
                name,
                r.errors.len(),
                r.error_summary.mean,
                r.error_summary.median,
                r.error_summary.max,
                r.projected_summary.mean
            )?;
        }
        writeln!(f, "error ratio (forget / remain) {:.4}", self.error_ratio)
    }
}

/// Per-sample errors as CSV: `split,index,error,projected_norm`.
pub fn write_errors_csv<W: Write>(mut out: W, splits: &[(&str, &ReconstructionReport)]) -> Result<()> {
    writeln!(out, "split,index,error,projected_norm")?;
    for (name, r) in splits {
        for (i, (e, p)) in r.errors.iter().zip(&r.projected_norms).enumerate() {
            writeln!(out, "{name},{i},{e:.9e},{p:.9e}")?;
        }
    }
    Ok(())
}

impl fmt::Display for ReconstructionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "subspace dimension {}, {} samples", self.subspace_dim, self.errors.len())?;
        writeln!(f, "{:<10} {:>12} {:>12} {:>12}", "", "mean", "median", "max")?;
        for (name, s) in [("error", &self.error_summary), ("projected", &self.projected_summary)] {
            writeln!(f, "{:<10} {:>12.6} {:>12.6} {:>12.6}", name, s.mean, s.median, s.max)?;
        }
        Ok(())
    }
}

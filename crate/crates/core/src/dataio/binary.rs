//! Little-endian binary formats.
//!
//! * FMAT (features): `FMAT1\n`, u32 rows, u32 cols, u8 flags (bit 0: labels
//!   present), rows×cols f32 row-major, then rows u32 labels if flagged.
//! * FPRJ (projector frame `U`): the FMAT layout under magic `FPRJ1\n`, never
//!   with labels.
//! * FCOV (covariance): `FCOV1\n`, u32 dim, dim×dim f64 row-major, f64 trace,
//!   u64 sample count, dim f64 mean.
//! * Head: an FMAT-layout `C×d` weight matrix followed by `C` f32 biases.

use std::fs;
use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::evaluator::LinearHead;
use crate::matcore::{CovarianceSummary, Matrix, SymmetricMatrix};
use crate::stiefel::StiefelPoint;

pub const FMAT_MAGIC: &[u8; 6] = b"FMAT1\n";
pub const FPRJ_MAGIC: &[u8; 6] = b"FPRJ1\n";
pub const FCOV_MAGIC: &[u8; 6] = b"FCOV1\n";

const FLAG_LABELS: u8 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let left = self.bytes.len() - self.pos;
        if n > left {
            return Err(Error::format(
                self.offset(),
                format!("truncated {what}: need {n} bytes, {left} left"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 6]) -> Result<()> {
        let found = self.take(6, "magic")?;
        if found != expected {
            return Err(Error::format(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(found),
                    String::from_utf8_lossy(expected)
                ),
            ));
        }
        Ok(())
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    /// Checks that `count` items of `width` bytes fit in what is left.
    fn reserve(&self, count: usize, width: usize, what: &str) -> Result<()> {
        let left = (self.bytes.len() - self.pos) as u128;
        let need = count as u128 * width as u128;
        if need > left {
            return Err(Error::format(
                self.offset(),
                format!("{what} needs {need} bytes but only {left} remain"),
            ));
        }
        Ok(())
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        self.reserve(count, 4, what)?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let at = self.offset();
            let v = f32::from_le_bytes(self.take(4, what)?.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(at, format!("non-finite value in {what}")));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        self.reserve(count, 8, what)?;
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let at = self.offset();
            let v = self.f64(what)?;
            if !v.is_finite() {
                return Err(Error::format(at, format!("non-finite value in {what}")));
            }
            out.push(v);
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.offset(),
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn push_f32s(out: &mut Vec<u8>, values: &[f64], what: &str) -> Result<()> {
    for v in values {
        let x = *v as f32;
        if !x.is_finite() {
            return Err(Error::invalid(format!("{what} value {v} does not fit in f32")));
        }
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(())
}

fn dim_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::invalid(format!("{what} {n} exceeds the u32 range")))
}

/// Header and payload shared by FMAT, FPRJ and head files.
fn encode_matrix(magic: &[u8; 6], m: &Matrix, labels: Option<&[u32]>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(15 + m.as_slice().len() * 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&dim_u32(m.rows(), "row count")?.to_le_bytes());
    out.extend_from_slice(&dim_u32(m.cols(), "column count")?.to_le_bytes());
    out.push(if labels.is_some() { FLAG_LABELS } else { 0 });
    push_f32s(&mut out, m.as_slice(), "matrix")?;
    if let Some(labels) = labels {
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode_matrix(cur: &mut Cursor, magic: &[u8; 6]) -> Result<(Matrix, Option<Vec<u32>>)> {
    cur.magic(magic)?;
    let rows = cur.u32("row count")? as usize;
    let cols = cur.u32("column count")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(6, format!("empty {rows}×{cols} matrix")));
    }
    let flags_at = cur.offset();
    let flags = cur.u8("flags")?;
    if flags & !FLAG_LABELS != 0 {
        return Err(Error::format(flags_at, format!("unknown flag bits {flags:#04x}")));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format(6, format!("{rows}×{cols} overflows")))?;
    let values = cur.f32s(count, "matrix payload")?;
    let labels = if flags & FLAG_LABELS != 0 {
        cur.reserve(rows, 4, "labels")?;
        Some((0..rows).map(|_| cur.u32("labels")).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok((Matrix::from_vec(rows, cols, values)?, labels))
}

pub fn encode_fmat(features: &FeatureMatrix) -> Result<Vec<u8>> {
    encode_matrix(FMAT_MAGIC, features.values(), features.labels())
}

pub fn decode_fmat(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut cur = Cursor::new(bytes);
    let (values, labels) = decode_matrix(&mut cur, FMAT_MAGIC)?;
    cur.finish()?;
    FeatureMatrix::new(values, labels)
}

pub fn encode_fprj(u: &StiefelPoint) -> Result<Vec<u8>> {
    encode_matrix(FPRJ_MAGIC, u.matrix(), None)
}

/// Decodes a projector frame. The stored `U` must be orthonormal to f32
/// precision.
pub fn decode_fprj(bytes: &[u8]) -> Result<StiefelPoint> {
    let mut cur = Cursor::new(bytes);
    let (u, labels) = decode_matrix(&mut cur, FPRJ_MAGIC)?;
    if labels.is_some() {
        return Err(Error::format(14, "projector files carry no labels"));
    }
    cur.finish()?;
    if u.rows() < u.cols() {
        return Err(Error::format(6, format!("projector is {}×{}, needs d ≥ s", u.rows(), u.cols())));
    }
    StiefelPoint::new(u)
}

pub fn encode_head(head: &LinearHead) -> Result<Vec<u8>> {
    let mut out = encode_matrix(FMAT_MAGIC, head.weights(), None)?;
    push_f32s(&mut out, head.bias(), "bias")?;
    Ok(out)
}

pub fn decode_head(bytes: &[u8]) -> Result<LinearHead> {
    let mut cur = Cursor::new(bytes);
    let (weights, labels) = decode_matrix(&mut cur, FMAT_MAGIC)?;
    if labels.is_some() {
        return Err(Error::format(14, "head files carry no labels"));
    }
    let bias = cur.f32s(weights.rows(), "bias")?;
    cur.finish()?;
    LinearHead::new(weights, bias)
}

pub fn encode_fcov(cov: &CovarianceSummary) -> Result<Vec<u8>> {
    let d = cov.dim();
    let mut out = Vec::with_capacity(6 + 4 + 8 * (d * d + d + 2));
    out.extend_from_slice(FCOV_MAGIC);
    out.extend_from_slice(&dim_u32(d, "dimension")?.to_le_bytes());
    for v in cov.matrix().as_matrix().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&cov.trace().to_le_bytes());
    out.extend_from_slice(&cov.count().to_le_bytes());
    for v in cov.mean() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fcov(bytes: &[u8]) -> Result<CovarianceSummary> {
    let mut cur = Cursor::new(bytes);
    cur.magic(FCOV_MAGIC)?;
    let d = cur.u32("dimension")? as usize;
    if d == 0 {
        return Err(Error::format(6, "zero dimension"));
    }
    let count = d
        .checked_mul(d)
        .ok_or_else(|| Error::format(6, format!("dimension {d} overflows")))?;
    let payload_at = cur.offset();
    let payload = cur.f64s(count, "covariance payload")?;
    let m = Matrix::from_vec(d, d, payload)?;
    let asym = m.sub(&m.transpose())?.max_abs();
    if asym > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::format(payload_at, format!("covariance is not symmetric (|A − Aᵀ| = {asym:.3e})")));
    }
    let trace_at = cur.offset();
    let trace = cur.f64("trace")?;
    let samples = cur.u64("sample count")?;
    let mean = cur.f64s(d, "mean")?;
    cur.finish()?;
    let summary = CovarianceSummary::new(SymmetricMatrix::from_matrix(&m)?, samples, mean)?;
    if (summary.trace() - trace).abs() > 1e-9 * trace.abs().max(1e-300) {
        return Err(Error::format(
            trace_at,
            format!("stored trace {trace} disagrees with the payload trace {}", summary.trace()),
        ));
    }
    Ok(summary)
}

fn read_with<T>(path: &Path, decode: impl FnOnce(&[u8]) -> Result<T>) -> Result<T> {
    fs::read(path)
        .map_err(Error::from)
        .and_then(|bytes| decode(&bytes))
        .map_err(|e| e.at_path(path))
}

fn write_bytes(path: &Path, bytes: Result<Vec<u8>>) -> Result<()> {
    bytes
        .and_then(|b| fs::write(path, b).map_err(Error::from))
        .map_err(|e| e.at_path(path))
}

pub fn read_fmat(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    read_with(path.as_ref(), decode_fmat)
}

pub fn write_fmat(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    write_bytes(path.as_ref(), encode_fmat(features))
}

pub fn read_fprj(path: impl AsRef<Path>) -> Result<StiefelPoint> {
    read_with(path.as_ref(), decode_fprj)
}

pub fn write_fprj(path: impl AsRef<Path>, u: &StiefelPoint) -> Result<()> {
    write_bytes(path.as_ref(), encode_fprj(u))
}

pub fn read_fcov(path: impl AsRef<Path>) -> Result<CovarianceSummary> {
    read_with(path.as_ref(), decode_fcov)
}

pub fn write_fcov(path: impl AsRef<Path>, cov: &CovarianceSummary) -> Result<()> {
    write_bytes(path.as_ref(), encode_fcov(cov))
}

pub fn read_head(path: impl AsRef<Path>) -> Result<LinearHead> {
    read_with(path.as_ref(), decode_head)
}

pub fn write_head(path: impl AsRef<Path>, head: &LinearHead) -> Result<()> {
    write_bytes(path.as_ref(), encode_head(head))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{covariance, Centering};
    use crate::stiefel::random_stiefel;

    fn offset_of(e: Error) -> u64 {
        match e {
            Error::Format { offset, .. } => offset,
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn hand_assembled_fmat() {
        let mut bytes = b"FMAT1\n".to_vec();
        bytes.extend_from_slice(&[2, 0, 0, 0, 2, 0, 0, 0, 0]);
        for v in [1.0f32, 2.0, 3.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let f = decode_fmat(&bytes).unwrap();
        assert_eq!(f.values().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(encode_fmat(&f).unwrap(), bytes);
    }

    #[test]
    fn empty_file_fails_at_zero() {
        assert_eq!(offset_of(decode_fmat(&[]).unwrap_err()), 0);
        assert_eq!(offset_of(decode_fcov(&[]).unwrap_err()), 0);
        assert_eq!(offset_of(decode_fprj(b"FMAT1\n").unwrap_err()), 0);
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let f = FeatureMatrix::new(Matrix::from_rows(&[[1.0, 2.0]]).unwrap(), Some(vec![3])).unwrap();
        let bytes = encode_fmat(&f).unwrap();
        assert_eq!(bytes.len(), 15 + 8 + 4);
        assert_eq!(offset_of(decode_fmat(&bytes[..20]).unwrap_err()), 15);
        assert_eq!(offset_of(decode_fmat(&bytes[..25]).unwrap_err()), 23);
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(offset_of(decode_fmat(&long).unwrap_err()), 27);
        let mut flagged = bytes;
        flagged[14] = 0x80;
        assert_eq!(offset_of(decode_fmat(&flagged).unwrap_err()), 14);
    }

    #[test]
    fn dimension_overflow() {
        let mut bytes = b"FMAT1\n".to_vec();
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.push(0);
        assert!(matches!(decode_fmat(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn fmat_round_trip() {
        let m = Matrix::from_rows(&[[0.1, -2.5, 3.0], [1e-3, 7.25, -0.0]]).unwrap();
        let f = FeatureMatrix::new(m.clone(), Some(vec![4, 0])).unwrap();
        let back = decode_fmat(&encode_fmat(&f).unwrap()).unwrap();
        assert_eq!(back.labels(), f.labels());
        for (a, b) in back.values().as_slice().iter().zip(m.as_slice()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }

    #[test]
    fn projector_round_trip() {
        let u = random_stiefel(9, 4, 1).unwrap();
        let back = decode_fprj(&encode_fprj(&u).unwrap()).unwrap();
        assert!(back.matrix().sub(u.matrix()).unwrap().max_abs() < 1e-7);
        // an FMAT file is not a projector
        let f = FeatureMatrix::new(u.matrix().clone(), None).unwrap();
        assert!(decode_fprj(&encode_fmat(&f).unwrap()).is_err());
    }

    #[test]
    fn non_orthonormal_projector_is_rejected() {
        let f = FeatureMatrix::new(Matrix::from_rows(&[[1.0], [1.0]]).unwrap(), None).unwrap();
        let mut bytes = encode_fmat(&f).unwrap();
        bytes[..6].copy_from_slice(FPRJ_MAGIC);
        assert!(decode_fprj(&bytes).is_err());
    }

    #[test]
    fn covariance_round_trip_is_exact() {
        let z = Matrix::from_rows(&[[1.0, 2.0, 0.5], [0.3, -1.0, 2.0], [4.0, 0.0, 1.0]]).unwrap();
        let cov = covariance(&z, Centering::Centered).unwrap();
        let bytes = encode_fcov(&cov).unwrap();
        assert_eq!(bytes.len(), 6 + 4 + 8 * 9 + 8 + 8 + 8 * 3);
        assert_eq!(decode_fcov(&bytes).unwrap(), cov);
    }

    #[test]
    fn corrupted_covariance_is_rejected() {
        let z = Matrix::from_rows(&[[1.0, 2.0], [0.3, -1.0]]).unwrap();
        let bytes = encode_fcov(&covariance(&z, Centering::Centered).unwrap()).unwrap();
        let mut asym = bytes.clone();
        asym[10 + 8..10 + 16].copy_from_slice(&9.0f64.to_le_bytes());
        assert_eq!(offset_of(decode_fcov(&asym).unwrap_err()), 10);
        let mut trace = bytes;
        trace[10 + 32..10 + 40].copy_from_slice(&123.0f64.to_le_bytes());
        assert_eq!(offset_of(decode_fcov(&trace).unwrap_err()), 42);
    }

    #[test]
    fn head_round_trip() {
        let w = Matrix::from_rows(&[[1.0, 0.5], [-2.0, 0.25], [0.0, 3.0]]).unwrap();
        let head = LinearHead::new(w, vec![0.5, -1.0, 2.0]).unwrap();
        let bytes = encode_head(&head).unwrap();
        assert_eq!(bytes.len(), 15 + 24 + 12);
        assert_eq!(decode_head(&bytes).unwrap(), head);
        assert!(decode_head(&bytes[..bytes.len() - 1]).is_err());
    }
}

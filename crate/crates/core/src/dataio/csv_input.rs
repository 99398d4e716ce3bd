use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::matcore::Matrix;

#[derive(Clone, Copy)]
pub(super) enum LabelSpec<'a> {
    Required(&'a str),
    IfPresent(&'a str),
}

/// Reads a numeric CSV file. `label_column` names a header field, or gives a
/// zero-based column index, holding nonnegative integer labels.
pub fn read_csv(path: impl AsRef<Path>, has_header: bool, label_column: Option<&str>) -> Result<FeatureMatrix> {
    read_csv_spec(path, has_header, label_column.map(LabelSpec::Required))
}

pub(super) fn read_csv_spec(path: impl AsRef<Path>, has_header: bool, label: Option<LabelSpec>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    File::open(path)
        .map_err(Error::from)
        .and_then(|f| read_csv_inner(f, has_header, label))
        .map_err(|e| e.at_path(path))
}

/// [`read_csv`] over any reader.
pub fn read_csv_from<R: Read>(reader: R, has_header: bool, label_column: Option<&str>) -> Result<FeatureMatrix> {
    read_csv_inner(reader, has_header, label_column.map(LabelSpec::Required))
}

fn csv_error(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

fn read_csv_inner<R: Read>(reader: R, has_header: bool, label: Option<LabelSpec>) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let label_index = match label {
        None => None,
        Some(spec) => {
            let name = match spec {
                LabelSpec::Required(n) | LabelSpec::IfPresent(n) => n,
            };
            let from_header = if has_header {
                let headers = rdr.headers().map_err(|e| csv_error(1, e.to_string()))?;
                headers.iter().position(|h| h == name)
            } else {
                None
            };
            match (from_header, spec) {
                (Some(i), _) => Some(i),
                (None, LabelSpec::IfPresent(_)) => None,
                (None, LabelSpec::Required(_)) => match name.parse::<usize>() {
                    Ok(i) => Some(i),
                    Err(_) => return Err(csv_error(1, format!("no label column named {name:?}"))),
                },
            }
        }
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            let message = match e.kind() {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("ragged row: {len} fields where {expected_len} were expected")
                }
                _ => e.to_string(),
            };
            csv_error(line, message)
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if let Some(i) = label_index {
            if i >= record.len() {
                return Err(csv_error(line, format!("label column {i} out of range for {} fields", record.len())));
            }
        }
        let mut count = 0;
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_index {
                let l = field
                    .parse::<u32>()
                    .map_err(|_| csv_error(line, format!("label {field:?} is not a nonnegative integer")))?;
                labels.push(l);
                continue;
            }
            let v = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| csv_error(line, format!("field {} ({field:?}) is not a finite number", j + 1)))?;
            values.push(v);
            count += 1;
        }
        if count == 0 {
            return Err(csv_error(line, "row has no feature columns"));
        }
        width.get_or_insert(count);
    }
    let Some(d) = width else {
        return Err(csv_error(if has_header { 1 } else { 0 }, "no data rows"));
    };
    let n = values.len() / d;
    FeatureMatrix::new(
        Matrix::from_vec(n, d, values)?,
        label_index.map(|_| labels),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, header: bool, label: Option<&str>) -> Result<FeatureMatrix> {
        read_csv_from(text.as_bytes(), header, label)
    }

    #[test]
    fn numeric_rows() {
        let f = parse("1,2\n3,4\n5,6\n", false, None).unwrap();
        assert_eq!(f.values().shape(), (3, 2));
        assert_eq!(f.values()[(2, 1)], 6.0);
        assert!(f.labels().is_none());
    }

    #[test]
    fn named_label_column() {
        let f = parse("a,label,b\n1.5,2,3\n4,0,5e-1\n", true, Some("label")).unwrap();
        assert_eq!(f.values().as_slice(), &[1.5, 3.0, 4.0, 0.5]);
        assert_eq!(f.labels().unwrap(), &[2, 0]);
    }

    #[test]
    fn indexed_label_column() {
        let f = parse("7,1,2\n8,3,4\n", false, Some("0")).unwrap();
        assert_eq!(f.labels().unwrap(), &[7, 8]);
        assert_eq!(f.dim(), 2);
    }

    #[test]
    fn quoted_fields() {
        let f = parse("\"x\",\"y, z\"\n\"1.0\",\"2\"\n", true, None).unwrap();
        assert_eq!(f.values().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn header_only_is_rejected() {
        assert!(matches!(parse("a,b\n", true, None), Err(Error::Csv { .. })));
    }

    #[test]
    fn ragged_row_names_its_line() {
        match parse("1,2\n3,4\n5\n", false, None) {
            Err(Error::Csv { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("ragged"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_its_line() {
        match parse("a,b\n1,2\n3,x\n", true, None) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse("1,-1\n", false, Some("1")).is_err());
        assert!(parse("1,nan\n", false, None).is_err());
    }

    #[test]
    fn missing_label_column() {
        assert!(parse("a,b\n1,2\n", true, Some("label")).is_err());
        let f = read_csv_inner("a,b\n1,2\n".as_bytes(), true, Some(LabelSpec::IfPresent("label"))).unwrap();
        assert!(f.labels().is_none());
    }
}

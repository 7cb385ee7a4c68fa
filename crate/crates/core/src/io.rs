//! Plain CSV matrices: one sample per row, one variable per column.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::DataMatrix;

/// Reads samples as rows. A first row that does not parse as numbers is
/// treated as a header.
pub fn parse_samples(text: &str) -> Result<DataMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map(|q| q.line() as usize).unwrap_or(k + 1);
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if k == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: e.to_string(),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Input("no data rows".into()));
    }
    let p = rows[0].len();
    let n = rows.len();
    let mut values = DMatrix::zeros(p, n);
    for (j, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            values[(i, j)] = *v;
        }
    }
    DataMatrix::new(values)
}

pub fn load_samples(path: &Path) -> Result<DataMatrix> {
    parse_samples(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_skipped() {
        let x = parse_samples("a,b\n1,2\n3,4\n5,7\n").unwrap();
        assert_eq!((x.p(), x.n()), (2, 3));
        assert_eq!(x.values()[(1, 2)], 7.0);
    }

    #[test]
    fn bad_cell_reports_line() {
        assert!(matches!(parse_samples("1,2\n3,x\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_samples("1,2\n3\n"), Err(Error::Parse { .. })));
    }
}

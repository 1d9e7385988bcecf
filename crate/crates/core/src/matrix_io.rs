//! Plain-text complex matrix format.
//!
//! ```text
//! <rows> <cols>
//! re im re im ...      (one line per row)
//! ```
//!
//! Every number is written with 17 significant digits, which round-trips
//! `f64` exactly.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::CMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatrixIoError {
    #[error("missing or malformed dimension header")]
    Header,
    #[error("row {row}: expected {expected} numbers, found {found}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("row {row}: cannot parse {token:?}")]
    Number { row: usize, token: String },
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
}

pub fn write_matrix(m: &CMatrix) -> String {
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let z = m[(r, c)];
            write!(out, "{:.16e} {:.16e}", z.re, z.im).expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix(text: &str) -> Result<CMatrix, MatrixIoError> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<usize> = lines
        .next()
        .ok_or(MatrixIoError::Header)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| MatrixIoError::Header))
        .collect::<Result<_, _>>()?;
    let [rows, cols] = header[..] else {
        return Err(MatrixIoError::Header);
    };
    let mut m = CMatrix::zeros(rows, cols);
    let mut found = 0;
    for (r, line) in lines.enumerate() {
        if r >= rows {
            return Err(MatrixIoError::RowCount {
                expected: rows,
                found: r + 1,
            });
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse().map_err(|_| MatrixIoError::Number {
                    row: r,
                    token: t.to_string(),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != 2 * cols {
            return Err(MatrixIoError::RowLength {
                row: r,
                expected: 2 * cols,
                found: values.len(),
            });
        }
        for c in 0..cols {
            m[(r, c)] = Complex64::new(values[2 * c], values[2 * c + 1]);
        }
        found += 1;
    }
    if found != rows {
        return Err(MatrixIoError::RowCount { expected: rows, found });
    }
    Ok(m)
}

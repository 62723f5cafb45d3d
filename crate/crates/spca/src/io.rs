//! Plain CSV readers and writers for numeric matrices.
//!
//! Format: one row per line, decimal fields separated by commas, no header
//! by default (callers may skip a leading header row). Values are written
//! with Rust's shortest round-trip formatting, so write-then-read
//! reproduces every `f64` bit for bit.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Parses a matrix from CSV. `skip_header` drops the first row.
pub fn read_matrix<R: Read>(reader: R, skip_header: bool) -> Result<DMatrix<f64>> {
    let reader = BufReader::new(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Degenerate(format!("read failed: {e}")))?;
        if lineno == 0 && skip_header {
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .enumerate()
            .map(|(col, field)| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::Degenerate(format!(
                        "line {}: field {} is not a number: {:?}",
                        lineno + 1,
                        col + 1,
                        field.trim()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if rows.is_empty() {
            width = row.len();
        } else if row.len() != width {
            return Err(Error::Degenerate(format!(
                "line {}: expected {} fields, found {}",
                lineno + 1,
                width,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Degenerate("CSV contains no data rows".into()));
    }
    let n = rows.len();
    Ok(DMatrix::from_fn(n, width, |i, j| rows[i][j]))
}

/// Writes a matrix as CSV (row-major, no header).
pub fn write_matrix<W: Write>(writer: &mut W, m: &DMatrix<f64>) -> Result<()> {
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{}", m[(i, j)]));
        }
        line.push('\n');
        writer
            .write_all(line.as_bytes())
            .map_err(|e| Error::Degenerate(format!("write failed: {e}")))?;
    }
    Ok(())
}

/// Reads a matrix from a file path.
pub fn read_matrix_file(path: &std::path::Path, skip_header: bool) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Degenerate(format!("cannot open {}: {e}", path.display())))?;
    read_matrix(file, skip_header)
}

/// Writes a matrix to a file path.
pub fn write_matrix_file(path: &std::path::Path, m: &DMatrix<f64>) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::Degenerate(format!("cannot create {}: {e}", path.display())))?;
    write_matrix(&mut file, m)
}

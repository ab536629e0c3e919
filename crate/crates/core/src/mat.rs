//! Dense row-major matrix storage shared by the domain types.
//!
//! The heavy numerical work happens on `nalgebra` types; this module only
//! owns storage, indexing, and the CSV text format used by the harness
//! (one matrix row per line, decimal text, LF line endings).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

use crate::{DrltError, Result};

/// Dense row-major `rows x cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(DrltError::dims(format!(
                "RowMat::new: {} entries for a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(RowMat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        RowMat { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a contiguous slice.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Entrywise maximum absolute value.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        RowMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Writes the matrix as CSV: one matrix row per line, fields separated
    /// by commas, decimal text, LF endings.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for i in 0..self.rows {
            let row = self.row(i);
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.write_all(line.join(",").as_bytes())?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a matrix from CSV text produced by [`RowMat::write_csv`].
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut data = Vec::new();
        let mut cols: Option<usize> = None;
        let mut rows = 0usize;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            match cols {
                None => cols = Some(fields.len()),
                Some(c) if c != fields.len() => {
                    return Err(DrltError::Parse(format!(
                        "csv row {} has {} fields, expected {}",
                        rows,
                        fields.len(),
                        c
                    )))
                }
                _ => {}
            }
            for f in fields {
                data.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| DrltError::Parse(format!("bad number {f:?}: {e}")))?,
                );
            }
            rows += 1;
        }
        let cols = cols.ok_or_else(|| DrltError::Parse("empty csv matrix".into()))?;
        RowMat::new(rows, cols, data)
    }
}

/// Writes a vector as a single-column CSV.
pub fn write_vec_csv<W: Write>(v: &[f64], out: &mut W) -> Result<()> {
    for x in v {
        out.write_all(format!("{x}\n").as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let m = RowMat::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5 - 1.0);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = RowMat::read_csv(buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let text = b"1,2,3\n4,5\n" as &[u8];
        assert!(RowMat::read_csv(text).is_err());
    }

    #[test]
    fn dmatrix_round_trip() {
        let m = RowMat::from_fn(2, 3, |i, j| (i + j) as f64);
        let d = m.to_dmatrix();
        assert_eq!(RowMat::from_dmatrix(&d), m);
    }
}

//! Dense row-major matrices with column metadata.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column order of every target matrix.
pub const TARGET_NAMES: [&str; 4] = ["infections", "hospitalizations", "recoveries", "deaths"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("expected {expected} values for a {rows}x{cols} matrix, got {got}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },
    #[error("duplicate column code {0:?}")]
    DuplicateColumn(String),
    #[error("non-finite value at row {row}, column {column:?}")]
    NonFinite { row: usize, column: String },
    #[error("row {row} has {got} values, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
}

/// Days in rows, features in columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    rows: usize,
    column_codes: Vec<String>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(column_codes: Vec<String>, values: Vec<f64>) -> Result<Self, MatrixError> {
        let cols = column_codes.len();
        let rows = values.len().checked_div(cols).unwrap_or(0);
        if rows * cols != values.len() {
            return Err(MatrixError::ShapeMismatch {
                rows,
                cols,
                expected: rows * cols,
                got: values.len(),
            });
        }
        for (i, code) in column_codes.iter().enumerate() {
            if column_codes[..i].contains(code) {
                return Err(MatrixError::DuplicateColumn(code.clone()));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite {
                row: pos / cols,
                column: column_codes[pos % cols].clone(),
            });
        }
        Ok(FeatureMatrix {
            rows,
            column_codes,
            values,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(column_codes: Vec<String>, rows: &[R]) -> Result<Self, MatrixError> {
        let cols = column_codes.len();
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(MatrixError::RaggedRow {
                    row: i,
                    expected: cols,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        let mut m = FeatureMatrix::new(column_codes, values)?;
        m.rows = rows.len();
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.column_codes.len()
    }

    pub fn column_codes(&self) -> &[String] {
        &self.column_codes
    }

    pub fn column_index(&self, code: &str) -> Option<usize> {
        self.column_codes.iter().position(|c| c == code)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.ncols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        self.rows().map(|r| r[col]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Rows picked by index, in the given order.
    pub fn take_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.ncols());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            rows: indices.len(),
            column_codes: self.column_codes.clone(),
            values,
        }
    }

    /// Stacks `other` below `self`. Column codes must agree.
    pub fn vstack(&self, other: &FeatureMatrix) -> Option<FeatureMatrix> {
        if self.column_codes != other.column_codes {
            return None;
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Some(FeatureMatrix {
            rows: self.rows + other.rows,
            column_codes: self.column_codes.clone(),
            values,
        })
    }

    pub(crate) fn from_parts_unchecked(
        rows: usize,
        column_codes: Vec<String>,
        values: Vec<f64>,
    ) -> FeatureMatrix {
        debug_assert_eq!(rows * column_codes.len(), values.len());
        FeatureMatrix {
            rows,
            column_codes,
            values,
        }
    }
}

/// Days in rows; columns are always [infections, hospitalizations, recoveries, deaths].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMatrix {
    rows: Vec<[f64; 4]>,
}

impl TargetMatrix {
    pub fn new(rows: Vec<[f64; 4]>) -> Self {
        TargetMatrix { rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64; 4] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[[f64; 4]] {
        &self.rows
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn take_rows(&self, indices: &[usize]) -> TargetMatrix {
        TargetMatrix {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    pub fn vstack(&self, other: &TargetMatrix) -> TargetMatrix {
        let mut rows = self.rows.clone();
        rows.extend_from_slice(&other.rows);
        TargetMatrix { rows }
    }
}

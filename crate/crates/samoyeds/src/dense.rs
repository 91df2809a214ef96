//! Plain row-major f32 matrix used as the dense endpoint of every codec and
//! oracle comparison.

use crate::error::{Error, Result};

/// Row-major dense matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

impl DenseMatrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    /// Wrap an existing row-major buffer, checking the length.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "value buffer holds {} elements, shape {}x{} needs {}",
                values.len(),
                rows,
                cols,
                rows * cols
            )));
        }
        Ok(DenseMatrix { rows, cols, values })
    }

    /// Build from nested rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Shape("ragged row lengths".into()));
            }
            values.extend_from_slice(row);
        }
        Ok(DenseMatrix { rows: r, cols: c, values })
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        debug_assert!(r < self.rows && c < self.cols);
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// Number of stored non-zero entries.
    pub fn count_nonzeros(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }

    /// Relative Frobenius distance `|a - b|_F / max(|b|_F, eps)`.
    pub fn rel_frobenius_error(&self, other: &DenseMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut diff = 0.0f64;
        let mut norm = 0.0f64;
        for (a, b) in self.values.iter().zip(&other.values) {
            let d = (*a as f64) - (*b as f64);
            diff += d * d;
            norm += (*b as f64) * (*b as f64);
        }
        (diff.sqrt()) / norm.sqrt().max(1e-30)
    }
}

//! Dense row-major 2-D arrays of f64, the carrier type for every matrix
//! in the pipeline: features, weights, adjacencies, scene grids.

use crate::error::{Error, Result};
use std::fmt;

/// A dense real-valued matrix in row-major order. Values are finite by
/// construction; constructors reject NaN/Inf.
#[derive(Clone, PartialEq)]
pub struct Dense2D {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl fmt::Debug for Dense2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dense2D[{}x{}]", self.rows, self.cols)?;
        if self.rows * self.cols <= 16 {
            write!(f, " {:?}", self.values)?;
        }
        Ok(())
    }
}

impl Dense2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense2D { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Dense2D { rows, cols, values: vec![v; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Domain(format!(
                "value count {} does not fill a {}x{} matrix",
                values.len(),
                rows,
                cols
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "constructing {}x{} matrix from value {}",
                rows, cols, bad
            )));
        }
        Ok(Dense2D { rows, cols, values })
    }

    /// Build from nested rows. Rows must be equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Format("ragged rows in matrix literal".into()));
        }
        let mut values = Vec::with_capacity(r * c);
        for row in rows {
            values.extend_from_slice(row);
        }
        Self::from_vec(r, c, values)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        Dense2D { rows, cols, values }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * self.cols + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Dense2D {
        Dense2D {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Reinterpret the same row-major data under a new shape.
    pub fn reshaped(&self, rows: usize, cols: usize) -> Result<Dense2D> {
        if rows * cols != self.values.len() {
            return Err(Error::dimension("reshape", self.shape(), (rows, cols)));
        }
        Ok(Dense2D { rows, cols, values: self.values.clone() })
    }

    pub fn transpose(&self) -> Dense2D {
        Dense2D::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, rhs: &Dense2D) -> Result<Dense2D> {
        if self.cols != rhs.rows {
            return Err(Error::dimension("matmul", self.shape(), rhs.shape()));
        }
        let mut out = Dense2D::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let lhs_row = i * rhs.cols;
                let rhs_row = k * rhs.cols;
                for j in 0..rhs.cols {
                    out.values[lhs_row + j] += a * rhs.values[rhs_row + j];
                }
            }
        }
        Ok(out)
    }

    pub fn zip(&self, rhs: &Dense2D, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Dense2D> {
        if self.shape() != rhs.shape() {
            return Err(Error::dimension(op, self.shape(), rhs.shape()));
        }
        Ok(Dense2D {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&rhs.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, rhs: &Dense2D) -> Result<Dense2D> {
        self.zip(rhs, "add", |a, b| a + b)
    }

    pub fn sub(&self, rhs: &Dense2D) -> Result<Dense2D> {
        self.zip(rhs, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, rhs: &Dense2D) -> Result<Dense2D> {
        self.zip(rhs, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Dense2D {
        self.map(|v| v * s)
    }

    /// Frobenius norm of self - other.
    pub fn frobenius_distance(&self, rhs: &Dense2D) -> Result<f64> {
        let d = self.sub(rhs)?;
        Ok(d.values.iter().map(|v| v * v).sum::<f64>().sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let i = Dense2D::identity(2);
        let b = Dense2D::from_rows(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(i.matmul(&b).unwrap(), b);
    }

    #[test]
    fn matmul_inner_product() {
        let a = Dense2D::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Dense2D::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), (1, 1));
        assert_eq!(c.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_shape_mismatch_names_shapes() {
        let a = Dense2D::zeros(2, 3);
        let b = Dense2D::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "{msg}");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Dense2D::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Dense2D::from_vec(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        // random 5x7 times 7x3 against a direct triple loop
        let mut state = 0x1234_5678_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = Dense2D::from_fn(5, 7, |_, _| next());
        let b = Dense2D::from_fn(7, 3, |_, _| next());
        let c = a.matmul(&b).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..7 {
                    s += a.get(i, k) * b.get(k, j);
                }
                assert!((c.get(i, j) - s).abs() < 1e-12);
            }
        }
    }
}

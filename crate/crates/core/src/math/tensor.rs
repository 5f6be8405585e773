use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};

/// Dense row-major array of `f64` with an explicit shape.
///
/// Public constructors reject NaN and infinities. Intermediate values inside a
/// computation graph are built with the unchecked constructor so that a
/// diverging loss can be reported with context instead of failing deep inside
/// an operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(mismatch("Tensor::new", format!("{expected} values for shape {shape:?}"), values.len()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {pos}")));
        }
        Ok(Self { shape, values })
    }

    pub(crate) fn from_raw(shape: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        Self { shape, values }
    }

    pub fn vector(values: Vec<f64>) -> Result<Self> {
        Self::new(vec![values.len()], values)
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(mismatch("Tensor::from_rows", cols, bad.len()));
        }
        Self::matrix(rows.len(), cols, rows.concat())
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, values: vec![0.0; len] }
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(vec![1], vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(vec![n, n]);
        for i in 0..n {
            t.values[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// (rows, cols) for a 2-D tensor; a 1-D tensor is treated as a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => (1, self.values.len()),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(mismatch("reshape", self.len(), format!("{shape:?}")));
        }
        Ok(Self { shape, values: self.values.clone() })
    }
}

/// z = M s for an n×m matrix and an m-vector.
pub fn matvec(matrix: &Tensor, s: &[f64]) -> Result<Vec<f64>> {
    if matrix.shape().len() != 2 {
        return Err(mismatch("matvec", "2-D matrix", format!("{:?}", matrix.shape())));
    }
    let (rows, cols) = matrix.dims2();
    if cols != s.len() {
        return Err(mismatch("matvec", cols, s.len()));
    }
    Ok((0..rows).map(|i| dot(matrix.row(i), s)).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(Tensor::vector(vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::vector(vec![f64::INFINITY]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn matvec_identity() {
        let z = matvec(&Tensor::identity(3), &[4.0, -1.0, 0.5]).unwrap();
        assert_eq!(z, vec![4.0, -1.0, 0.5]);
    }

    #[test]
    fn matvec_uniform_gives_mean() {
        let m = Tensor::matrix(4, 4, vec![0.25; 16]).unwrap();
        let s = [1.0, 2.0, -3.0, 8.0];
        for z in matvec(&m, &s).unwrap() {
            assert!((z - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matvec_two_by_two() {
        let m = Tensor::from_rows(&[vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let z = matvec(&m, &[1.0, 2.0]).unwrap();
        assert!((z[0] - 1.3).abs() < 1e-15);
        assert!((z[1] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let err = matvec(&Tensor::identity(3), &[1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}

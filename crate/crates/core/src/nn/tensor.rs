//! Dense n-dimensional array of 64-bit floats, row-major.

use crate::error::{Error, Result};

/// The universal numeric carrier. Shape is a list of positive integers and
/// `data.len() == product(shape)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, panicking if `data` does not fill `shape`.
    /// Use [`Tensor::checked`] at API boundaries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        let n: usize = shape.iter().product();
        assert_eq!(n, data.len(), "shape {:?} needs {} values, got {}", shape, n, data.len());
        Tensor { shape, data }
    }

    /// Checked construction: validates the size invariant and rejects
    /// non-finite entries.
    pub fn checked(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if shape.iter().any(|&s| s == 0) {
            return Err(Error::Dimension(format!("zero-sized dimension in shape {:?}", shape)));
        }
        if n != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                n,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("non-finite entry {} at index {}", data[i], i)));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape, data: vec![v; n] }
    }

    /// Scalar tensor of shape `[1]`.
    pub fn scalar(v: f64) -> Tensor {
        Tensor { shape: vec![1], data: vec![v] }
    }

    /// 1-D tensor from a vector.
    pub fn from_vec(v: Vec<f64>) -> Tensor {
        Tensor { shape: vec![v.len()], data: v }
    }

    /// 2-D tensor from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Tensor {
        assert!(!rows.is_empty(), "from_rows needs at least one row");
        let d = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            assert_eq!(r.len(), d, "ragged rows");
            data.extend_from_slice(r);
        }
        Tensor { shape: vec![rows.len(), d], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Interprets the tensor as a matrix: 1-D `[d]` becomes `(1, d)`,
    /// 2-D `[n, d]` stays `(n, d)`.
    pub fn as_matrix(&self) -> Result<(usize, usize)> {
        match self.shape.len() {
            1 => Ok((1, self.shape[0])),
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(Error::Dimension(format!("expected 1-D or 2-D tensor, got shape {:?}", self.shape))),
        }
    }

    /// Row `i` of a (logical) matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        let (n, d) = self.as_matrix().expect("row() on non-matrix tensor");
        assert!(i < n, "row {} out of {}", i, n);
        &self.data[i * d..(i + 1) * d]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_rejects_bad_sizes_and_nonfinite() {
        assert!(Tensor::checked(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::checked(vec![2], vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::checked(vec![2], vec![1.0, f64::INFINITY]).is_err());
        assert!(Tensor::checked(vec![0], vec![]).is_err());
        assert!(Tensor::checked(vec![2], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn matrix_views() {
        let t = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(t.as_matrix().unwrap(), (2, 2));
        assert_eq!(t.row(1), &[3.0, 4.0]);
        let v = Tensor::from_vec(vec![5.0, 6.0, 7.0]);
        assert_eq!(v.as_matrix().unwrap(), (1, 3));
        assert_eq!(v.row(0), &[5.0, 6.0, 7.0]);
    }
}

//! Dense row-major tensor storage.

use std::sync::Arc;

use super::{AutodiffError, Result};

/// Dense n-dimensional real array.
///
/// Values are stored flat in row-major order behind an `Arc`, so cloning a
/// tensor (e.g. leafing shared weights into many concurrent tapes) is cheap.
/// `grad`, when present, runs parallel to `data`.
#[derive(Debug, Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(AutodiffError::ShapeDataMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len]).expect("zeros: consistent by construction")
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![1], vec![v]).expect("scalar: consistent by construction")
    }

    /// 1-D tensor from a slice.
    pub fn vector(data: &[f64]) -> Self {
        Self::new(vec![data.len()], data.to_vec()).expect("vector: consistent by construction")
    }

    /// 2-D tensor from flat row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    /// 1×n row matrix from a slice (activation convention for MLP inputs).
    pub fn row(data: &[f64]) -> Self {
        Self::new(vec![1, data.len()], data.to_vec()).expect("row: consistent by construction")
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Mutable view of the values. Copies the buffer first if it is shared
    /// (e.g. still referenced by a live tape).
    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    /// O(1) handle to the underlying buffer; lets backward rules read one
    /// node's values while mutating another node's gradient.
    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.data)
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows/cols view of a 1- or 2-D tensor: 1-D tensors are treated as a
    /// single row.
    pub fn as_2d(&self) -> (usize, usize) {
        match self.shape.len() {
            1 => (1, self.shape[0]),
            2 => (self.shape[0], self.shape[1]),
            _ => panic!("as_2d on rank-{} tensor", self.shape.len()),
        }
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && *self.data == *other.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_data_len() {
        let err = Tensor::new(vec![2, 3], vec![1.0; 5]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("6") && msg.contains("5"), "{msg}");
    }

    #[test]
    fn data_mut_does_not_disturb_shared_clones() {
        let mut a = Tensor::vector(&[1.0, 2.0]);
        let b = a.clone();
        a.data_mut()[0] = 9.0;
        assert_eq!(b.data(), &[1.0, 2.0]);
        assert_eq!(a.data(), &[9.0, 2.0]);
    }
}

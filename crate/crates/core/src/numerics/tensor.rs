use alloc::vec;
use alloc::vec::Vec;

use super::Real;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("tensor must have at least one dimension")]
    EmptyDims,
    #[error("extent {axis} is zero")]
    ZeroExtent { axis: usize },
    #[error("dims {dims:?} describe {expected} elements but {actual} were supplied")]
    LengthMismatch {
        dims: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("incompatible shapes {left:?} and {right:?} for {op}")]
    Incompatible {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
}

/// Dense row-major array; the last index varies fastest.
///
/// Every extent is at least one and `data.len()` is the product of the
/// extents. Both are checked at construction and kept by every method.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn check_dims(dims: &[usize]) -> Result<usize, ShapeError> {
    if dims.is_empty() {
        return Err(ShapeError::EmptyDims);
    }
    if let Some(axis) = dims.iter().position(|&d| d == 0) {
        return Err(ShapeError::ZeroExtent { axis });
    }
    Ok(dims.iter().product())
}

impl<T: Copy> Tensor<T> {
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self, ShapeError> {
        let expected = check_dims(dims)?;
        if expected != data.len() {
            return Err(ShapeError::LengthMismatch {
                dims: dims.to_vec(),
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Panics on an invalid shape; use [`Tensor::from_vec`] for untrusted dims.
    pub fn full(dims: &[usize], value: T) -> Self {
        let n = check_dims(dims).expect("invalid tensor dims");
        Self {
            dims: dims.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self, ShapeError> {
        Self::from_vec(dims, self.data)
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Flat offset of a multi-index. Panics when out of range.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            assert!(i < d, "index {i} out of range for extent {d}");
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let at = self.offset(index);
        self.data[at] = value;
    }
}

impl<T: Real> Tensor<T> {
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, T::ZERO)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::ONE;
        }
        t
    }

    /// Sequential sum in 64-bit.
    pub fn sum(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, &v| acc + v.to_f64())
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        self.map(|v| U::from_f64(v.to_f64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_extent_and_bad_length() {
        assert_eq!(
            Tensor::from_vec(&[2, 0], Vec::<f32>::new()),
            Err(ShapeError::ZeroExtent { axis: 1 })
        );
        assert!(matches!(
            Tensor::from_vec(&[2, 2], vec![0.0f32; 3]),
            Err(ShapeError::LengthMismatch { expected: 4, .. })
        ));
        assert_eq!(
            Tensor::<f32>::from_vec(&[], vec![]),
            Err(ShapeError::EmptyDims)
        );
    }

    #[test]
    fn offset_is_row_major() {
        let t = Tensor::from_vec(&[2, 3, 4], (0..24).map(|v| v as f32).collect()).unwrap();
        assert_eq!(t.get(&[1, 2, 3]), 23.0);
        assert_eq!(t.get(&[0, 1, 0]), 4.0);
        assert_eq!(t.get(&[1, 0, 0]), 12.0);
    }

    #[test]
    fn sum_and_mean_accumulate_in_f64() {
        // 1e8 + 1 + 1 ... loses the ones in f32 accumulation.
        let mut data = vec![1.0f32; 1001];
        data[0] = 1.0e8;
        let t = Tensor::from_vec(&[1001], data).unwrap();
        assert_eq!(t.sum(), 1.0e8 + 1000.0);
        assert!((t.mean() - (1.0e8 + 1000.0) / 1001.0).abs() < 1e-6);
    }
}

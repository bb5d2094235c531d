//! Dense rank-4 tensors in `(batch, height, width, channels)` layout.

use super::NnError;

/// A dense `f64` tensor with fixed rank 4 and row-major layout
/// `(batch, height, width, channels)`.
///
/// Lower-rank data uses size-1 extents (a dense-layer output is
/// `(batch, 1, 1, features)`), so every layer speaks the same type. The flat
/// index of element `(b, i, j, c)` is `((b*h + i)*w + j)*ch + c`; one sample is
/// therefore a contiguous slice, which is what the flatten-free dense head
/// relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    /// An all-zero tensor of the given shape.
    pub fn zeros(shape: [usize; 4]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; len],
        }
    }

    /// Wraps an existing buffer; the length must equal the shape product.
    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(NnError::ShapeMismatch {
                context: "Tensor::from_vec",
                expected: vec![len],
                got: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Reinterprets the buffer under a new shape with the same total length.
    pub fn reshape(self, shape: [usize; 4]) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if self.data.len() != len {
            return Err(NnError::ShapeMismatch {
                context: "Tensor::reshape",
                expected: vec![len],
                got: vec![self.data.len()],
            });
        }
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn channels(&self) -> usize {
        self.shape[3]
    }

    /// Elements per sample (`height * width * channels`).
    pub fn features(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat index of `(b, i, j, c)`.
    #[inline]
    pub fn index(&self, b: usize, i: usize, j: usize, c: usize) -> usize {
        ((b * self.shape[1] + i) * self.shape[2] + j) * self.shape[3] + c
    }

    #[inline]
    pub fn get(&self, b: usize, i: usize, j: usize, c: usize) -> f64 {
        self.data[self.index(b, i, j, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, i: usize, j: usize, c: usize, value: f64) {
        let idx = self.index(b, i, j, c);
        self.data[idx] = value;
    }

    /// The contiguous slice holding sample `b`.
    pub fn sample(&self, b: usize) -> &[f64] {
        let f = self.features();
        &self.data[b * f..(b + 1) * f]
    }

    /// Mutable slice holding sample `b`.
    pub fn sample_mut(&mut self, b: usize) -> &mut [f64] {
        let f = self.features();
        &mut self.data[b * f..(b + 1) * f]
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug-mode check that a layer produced finite values.
    #[inline]
    pub fn debug_assert_finite(&self, what: &str) {
        debug_assert!(self.all_finite(), "non-finite values after {what}");
        let _ = what;
    }

    /// Stacks the listed samples of `src` into a new tensor (used to gather
    /// shuffled mini-batches).
    pub fn gather(src: &Tensor, rows: &[usize]) -> Tensor {
        let f = src.features();
        let mut data = Vec::with_capacity(rows.len() * f);
        for &r in rows {
            data.extend_from_slice(src.sample(r));
        }
        Tensor {
            shape: [rows.len(), src.shape[1], src.shape[2], src.shape[3]],
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_row_major_in_bhwc() {
        let mut t = Tensor::zeros([2, 3, 4, 5]);
        t.set(1, 2, 3, 4, 7.5);
        assert_eq!(t.index(1, 2, 3, 4), ((1 * 3 + 2) * 4 + 3) * 5 + 4);
        assert_eq!(t.data()[t.index(1, 2, 3, 4)], 7.5);
        assert_eq!(t.len(), 2 * 3 * 4 * 5);
    }

    #[test]
    fn from_vec_validates_length() {
        assert!(Tensor::from_vec([1, 2, 2, 1], vec![0.0; 4]).is_ok());
        let err = Tensor::from_vec([1, 2, 2, 1], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, NnError::ShapeMismatch { .. }));
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::from_vec([1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = t.clone().reshape([1, 1, 1, 4]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape([1, 1, 1, 3]).is_err());
    }

    #[test]
    fn gather_stacks_samples() {
        let src = Tensor::from_vec([3, 1, 1, 2], vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0]).unwrap();
        let picked = Tensor::gather(&src, &[2, 0]);
        assert_eq!(picked.shape(), [2, 1, 1, 2]);
        assert_eq!(picked.data(), &[20.0, 21.0, 0.0, 1.0]);
    }
}

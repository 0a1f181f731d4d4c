//! Batched single-precision tensors.
//!
//! A [`Tensor`] is a rank 1–4 row-major array over `(batch, channel, row,
//! column)`. The last dimension may be padded so that each row starts on a
//! multiple of the SIMD vector width; padding positions always hold `0.0`
//! and are never observable through the logical accessors.

use crate::error::{shape_err, Error, Result};

pub const MAX_RANK: usize = 4;

/// Number of `f32` lanes per SIMD vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VectorWidth(usize);

impl VectorWidth {
    /// One lane: padding disabled.
    pub const NONE: VectorWidth = VectorWidth(1);
    pub const SSE: VectorWidth = VectorWidth(4);
    pub const AVX: VectorWidth = VectorWidth(8);
    pub const AVX512: VectorWidth = VectorWidth(16);

    pub fn new(lanes: usize) -> Result<Self> {
        match lanes {
            1 | 4 | 8 | 16 => Ok(VectorWidth(lanes)),
            _ => Err(Error::InvalidParameter(format!(
                "vector width must be one of 1, 4, 8, 16 (got {lanes})"
            ))),
        }
    }

    #[inline]
    pub fn lanes(self) -> usize {
        self.0
    }

    #[inline]
    pub fn round_up(self, n: usize) -> usize {
        n.div_ceil(self.0) * self.0
    }
}

impl Default for VectorWidth {
    fn default() -> Self {
        VectorWidth::AVX
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.len() > MAX_RANK {
        return Err(shape_err(format!(
            "rank must be 1..={MAX_RANK}, got {}",
            dims.len()
        )));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(shape_err(format!("extent {pos} of {dims:?} is zero")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    stride_last: usize,
    lanes: VectorWidth,
    data: Vec<f32>,
}

/// Creates a zero tensor, padded to the default vector width when `padded`.
pub fn make_tensor(dims: &[usize], padded: bool) -> Result<Tensor> {
    let lanes = if padded {
        VectorWidth::default()
    } else {
        VectorWidth::NONE
    };
    Tensor::try_with_lanes(dims, lanes)
}

impl Tensor {
    pub fn try_with_lanes(dims: &[usize], lanes: VectorWidth) -> Result<Tensor> {
        check_dims(dims)?;
        let last = dims[dims.len() - 1];
        let stride_last = lanes.round_up(last);
        let rows: usize = dims[..dims.len() - 1].iter().product();
        Ok(Tensor {
            dims: dims.to_vec(),
            stride_last,
            lanes,
            data: vec![0.0; rows * stride_last],
        })
    }

    /// Packed zero tensor.
    ///
    /// Panics on a zero extent or a rank outside 1..=4; use
    /// [`Tensor::try_with_lanes`] for untrusted shapes.
    pub fn zeros(dims: &[usize]) -> Tensor {
        Self::try_with_lanes(dims, VectorWidth::NONE).expect("invalid tensor shape")
    }

    pub fn with_lanes(dims: &[usize], lanes: VectorWidth) -> Tensor {
        Self::try_with_lanes(dims, lanes).expect("invalid tensor shape")
    }

    pub fn full(dims: &[usize], value: f32) -> Tensor {
        let mut t = Tensor::zeros(dims);
        t.data.fill(value);
        t
    }

    /// Packed tensor over `data`.
    pub fn from_vec(dims: &[usize], data: Vec<f32>) -> Result<Tensor> {
        check_dims(dims)?;
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(shape_err(format!(
                "{dims:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            stride_last: dims[dims.len() - 1],
            lanes: VectorWidth::NONE,
            data,
        })
    }

    /// Zero tensor with the same shape and layout.
    pub fn zeros_like(&self) -> Tensor {
        Tensor::with_lanes(&self.dims, self.lanes)
    }

    #[inline]
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    #[inline]
    pub fn stride_last(&self) -> usize {
        self.stride_last
    }

    #[inline]
    pub fn lanes(&self) -> VectorWidth {
        self.lanes
    }

    #[inline]
    pub fn is_packed(&self) -> bool {
        self.stride_last == self.last_extent()
    }

    #[inline]
    pub fn last_extent(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Logical element count.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Extent of the leading (batch) dimension.
    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    /// Logical elements per batch entry.
    pub fn sample_len(&self) -> usize {
        self.dims[1..].iter().product()
    }

    /// Number of last-dimension rows.
    #[inline]
    pub fn rows(&self) -> usize {
        self.data.len() / self.stride_last
    }

    /// Raw buffer including padding.
    #[inline]
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Raw mutable buffer including padding. Callers must keep padding
    /// positions at zero.
    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        let s = r * self.stride_last;
        &self.data[s..s + self.last_extent()]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        let last = self.last_extent();
        let s = r * self.stride_last;
        &mut self.data[s..s + last]
    }

    pub fn logical_iter(&self) -> impl Iterator<Item = f32> + '_ {
        let last = self.last_extent();
        self.data
            .chunks_exact(self.stride_last)
            .flat_map(move |row| row[..last].iter().copied())
    }

    /// Logical contents in row-major order, padding stripped.
    pub fn to_vec(&self) -> Vec<f32> {
        if self.is_packed() {
            self.data.clone()
        } else {
            self.logical_iter().collect()
        }
    }

    /// Consumes a packed tensor and returns its buffer.
    pub fn into_vec(self) -> Vec<f32> {
        if self.is_packed() {
            self.data
        } else {
            self.to_vec()
        }
    }

    fn flat_offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.dims.len(), "index rank mismatch");
        let mut row = 0;
        for (i, (&ix, &d)) in index[..index.len() - 1]
            .iter()
            .zip(&self.dims)
            .enumerate()
        {
            assert!(ix < d, "index {ix} out of range for axis {i} ({d})");
            row = row * d + ix;
        }
        let col = index[index.len() - 1];
        assert!(col < self.last_extent(), "column {col} out of range");
        row * self.stride_last + col
    }

    pub fn get(&self, index: &[usize]) -> f32 {
        self.data[self.flat_offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f32) {
        let o = self.flat_offset(index);
        self.data[o] = value;
    }

    /// Copies logical contents into a tensor padded to `lanes`.
    pub fn copy_into_padded(&self, lanes: VectorWidth) -> Tensor {
        let mut out = Tensor::with_lanes(&self.dims, lanes);
        for r in 0..self.rows() {
            out.row_mut(r).copy_from_slice(self.row(r));
        }
        out
    }

    /// Copy with padding removed.
    pub fn to_packed(&self) -> Tensor {
        if self.is_packed() {
            return Tensor {
                lanes: VectorWidth::NONE,
                ..self.clone()
            };
        }
        Tensor {
            dims: self.dims.clone(),
            stride_last: self.last_extent(),
            lanes: VectorWidth::NONE,
            data: self.to_vec(),
        }
    }

    /// Reinterprets a packed tensor with a new shape of equal length.
    pub fn reshape(mut self, dims: &[usize]) -> Result<Tensor> {
        check_dims(dims)?;
        if dims.iter().product::<usize>() != self.len() {
            return Err(shape_err(format!(
                "cannot reshape {:?} into {dims:?}",
                self.dims
            )));
        }
        if !self.is_packed() {
            self = self.to_packed();
        }
        self.dims = dims.to_vec();
        self.stride_last = dims[dims.len() - 1];
        Ok(self)
    }

    /// Applies `f` to every logical element in place.
    pub fn map_inplace(&mut self, mut f: impl FnMut(f32) -> f32) {
        let last = self.last_extent();
        for row in self.data.chunks_exact_mut(self.stride_last) {
            for x in &mut row[..last] {
                *x = f(*x);
            }
        }
    }

    pub fn fill(&mut self, value: f32) {
        self.map_inplace(|_| value);
    }

    pub fn shape_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
    }

    fn check_batch_range(&self, lo: usize, hi: usize) -> Result<()> {
        if lo >= hi || hi > self.dims[0] {
            return Err(Error::Bounds {
                lo,
                hi,
                len: self.dims[0],
            });
        }
        Ok(())
    }

    fn batch_span(&self) -> usize {
        self.data.len() / self.dims[0]
    }

    /// Borrowed view over samples `lo..hi`.
    pub fn slice_batch(&self, lo: usize, hi: usize) -> Result<TensorView<'_>> {
        self.check_batch_range(lo, hi)?;
        let span = self.batch_span();
        let mut dims = self.dims.clone();
        dims[0] = hi - lo;
        Ok(TensorView {
            dims,
            stride_last: self.stride_last,
            data: &self.data[lo * span..hi * span],
        })
    }

    /// Mutable view over samples `lo..hi`; writes land in this tensor.
    pub fn slice_batch_mut(&mut self, lo: usize, hi: usize) -> Result<TensorViewMut<'_>> {
        self.check_batch_range(lo, hi)?;
        let span = self.batch_span();
        let mut dims = self.dims.clone();
        dims[0] = hi - lo;
        Ok(TensorViewMut {
            dims,
            stride_last: self.stride_last,
            data: &mut self.data[lo * span..hi * span],
        })
    }

    /// Raw per-sample chunks (padding included) for data-parallel loops.
    pub fn sample_chunks_mut(&mut self) -> std::slice::ChunksExactMut<'_, f32> {
        let span = self.batch_span();
        self.data.chunks_exact_mut(span)
    }

    pub fn sample_chunks(&self) -> std::slice::ChunksExact<'_, f32> {
        let span = self.batch_span();
        self.data.chunks_exact(span)
    }

    /// Stacks samples selected by `indices` into a new packed tensor.
    pub fn gather_batch(&self, indices: &[usize]) -> Tensor {
        assert!(!indices.is_empty());
        let mut dims = self.dims.clone();
        dims[0] = indices.len();
        let mut out = Tensor::with_lanes(&dims, self.lanes);
        let span = self.batch_span();
        for (dst, &i) in out.data.chunks_exact_mut(span).zip(indices) {
            dst.copy_from_slice(&self.data[i * span..(i + 1) * span]);
        }
        out
    }
}

/// Read-only view over a contiguous batch range of a [`Tensor`].
#[derive(Clone, Debug)]
pub struct TensorView<'a> {
    dims: Vec<usize>,
    stride_last: usize,
    data: &'a [f32],
}

impl<'a> TensorView<'a> {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn stride_last(&self) -> usize {
        self.stride_last
    }

    pub fn as_slice(&self) -> &'a [f32] {
        self.data
    }

    pub fn row(&self, r: usize) -> &'a [f32] {
        let last = self.dims[self.dims.len() - 1];
        let s = r * self.stride_last;
        &self.data[s..s + last]
    }

    pub fn to_tensor(&self) -> Tensor {
        let last = self.dims[self.dims.len() - 1];
        let lanes = if self.stride_last == last {
            VectorWidth::NONE
        } else {
            // The stride was produced by rounding `last` up to some width;
            // the widest width that divides it reproduces the same layout.
            [16, 8, 4]
                .into_iter()
                .map(VectorWidth)
                .find(|w| self.stride_last % w.0 == 0 && w.round_up(last) == self.stride_last)
                .unwrap_or(VectorWidth::NONE)
        };
        let mut t = Tensor::with_lanes(&self.dims, lanes);
        if t.stride_last == self.stride_last {
            t.data.copy_from_slice(self.data);
        } else {
            for r in 0..t.rows() {
                t.row_mut(r).copy_from_slice(self.row(r));
            }
        }
        t
    }
}

/// Mutable view over a contiguous batch range of a [`Tensor`].
#[derive(Debug)]
pub struct TensorViewMut<'a> {
    dims: Vec<usize>,
    stride_last: usize,
    data: &'a mut [f32],
}

impl TensorViewMut<'_> {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        let last = self.dims[self.dims.len() - 1];
        let s = r * self.stride_last;
        &mut self.data[s..s + last]
    }

    pub fn map_inplace(&mut self, mut f: impl FnMut(f32) -> f32) {
        let last = self.dims[self.dims.len() - 1];
        for row in self.data.chunks_exact_mut(self.stride_last) {
            for x in &mut row[..last] {
                *x = f(*x);
            }
        }
    }

    pub fn fill(&mut self, value: f32) {
        self.map_inplace(|_| value);
    }
}

use rayon::prelude::*;

use crate::tensor::Tensor;

/// Rows handled per parallel task.
const ROWS_PER_TASK: usize = 256;

/// `y[i] = f(x[i])` over logical elements. Padding positions stay zero.
pub fn elementwise_apply<F>(x: &Tensor, f: F) -> Tensor
where
    F: Fn(f32) -> f32 + Sync,
{
    let mut y = x.clone();
    elementwise_inplace(&mut y, f);
    y
}

pub fn elementwise_inplace<F>(x: &mut Tensor, f: F)
where
    F: Fn(f32) -> f32 + Sync,
{
    let stride = x.stride_last();
    let last = x.last_extent();
    let data = x.as_mut_slice();
    if data.len() < ROWS_PER_TASK * stride {
        for row in data.chunks_exact_mut(stride) {
            row[..last].iter_mut().for_each(|v| *v = f(*v));
        }
        return;
    }
    data.par_chunks_mut(ROWS_PER_TASK * stride).for_each(|block| {
        for row in block.chunks_exact_mut(stride) {
            row[..last].iter_mut().for_each(|v| *v = f(*v));
        }
    });
}

/// `y[i] = f(a[i], b[i])` over logical elements of two tensors with equal
/// shape and layout.
pub fn elementwise_zip<F>(a: &Tensor, b: &Tensor, f: F) -> Tensor
where
    F: Fn(f32, f32) -> f32 + Sync,
{
    assert_eq!(a.dims(), b.dims(), "elementwise_zip shape mismatch");
    assert_eq!(a.stride_last(), b.stride_last(), "elementwise_zip layout mismatch");
    let mut y = a.clone();
    let stride = a.stride_last();
    let last = a.last_extent();
    y.as_mut_slice()
        .par_chunks_mut(stride)
        .zip(b.as_slice().par_chunks(stride))
        .for_each(|(yr, br)| {
            for (v, &w) in yr[..last].iter_mut().zip(&br[..last]) {
                *v = f(*v, w);
            }
        });
    y
}

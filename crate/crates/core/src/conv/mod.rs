//! Batched 2-D convolution with interchangeable backends.
//!
//! Valid mode (forward pass) is cross-correlation; full mode (backward data
//! pass) is the true flipped convolution. [`dispatch::Dispatcher`] picks a
//! backend per shape; forcing a backend never changes results beyond
//! floating-point reassociation.

mod backends;
pub mod dispatch;
mod shape;

pub use dispatch::{dispatch_full, dispatch_valid, ConvPolicy, DispatchRule, Dispatcher};
pub use shape::{ConvBackend, ConvMode, ConvShape};

use backends::PlaneKernel;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

fn require_backend(backend: ConvBackend, mode: ConvMode) -> Result<()> {
    if backend.mode() != mode {
        return Err(Error::InvalidParameter(format!(
            "{backend} cannot compute a {} convolution",
            mode.as_str()
        )));
    }
    Ok(())
}

pub fn conv_valid_direct(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    shape.check_operands(ConvMode::Valid, x, kernels)?;
    Ok(backends::valid_direct_impl(x, kernels, shape, PlaneKernel::Auto))
}

/// Direct valid convolution that never takes the unrolled 3x3/5x5 path.
pub fn conv_valid_direct_generic(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    shape.check_operands(ConvMode::Valid, x, kernels)?;
    Ok(backends::valid_direct_impl(x, kernels, shape, PlaneKernel::Generic))
}

pub fn conv_valid_im2col(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    shape.check_operands(ConvMode::Valid, x, kernels)?;
    Ok(backends::valid_im2col_impl(x, kernels, shape))
}

pub fn conv_full_fft(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    shape.check_operands(ConvMode::Full, x, kernels)?;
    backends::full_fft_impl(x, kernels, shape)
}

pub fn conv_full_padded_valid(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    shape.check_operands(ConvMode::Full, x, kernels)?;
    Ok(backends::full_padded_valid_impl(x, kernels, shape))
}

/// Valid convolution with an explicit backend.
pub fn conv_valid(
    x: &Tensor,
    kernels: &Tensor,
    shape: &ConvShape,
    backend: ConvBackend,
) -> Result<Tensor> {
    require_backend(backend, ConvMode::Valid)?;
    match backend {
        ConvBackend::DirectValid => conv_valid_direct(x, kernels, shape),
        _ => conv_valid_im2col(x, kernels, shape),
    }
}

/// Full convolution with an explicit backend.
pub fn conv_full(
    x: &Tensor,
    kernels: &Tensor,
    shape: &ConvShape,
    backend: ConvBackend,
) -> Result<Tensor> {
    require_backend(backend, ConvMode::Full)?;
    match backend {
        ConvBackend::FftFull => conv_full_fft(x, kernels, shape),
        _ => conv_full_padded_valid(x, kernels, shape),
    }
}

pub fn conv_valid_dispatched(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    conv_valid(x, kernels, shape, dispatch_valid(shape))
}

pub fn conv_full_dispatched(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    conv_full(x, kernels, shape, dispatch_full(shape))
}

/// Column matrix of a single image (`1 x c_in x h x w`): extents
/// `(c_in*kh*kw) x (out_h*out_w)`, rows ordered channel, kernel row,
/// kernel column.
pub fn im2col(x: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    shape.validate(ConvMode::Valid)?;
    let single = ConvShape { n: 1, ..*shape };
    if x.dims() != single.input_dims() {
        return Err(shape_err(format!(
            "im2col expects one image {:?}, got {:?}",
            single.input_dims(),
            x.dims()
        )));
    }
    let (oh, ow) = shape.out_dims(ConvMode::Valid);
    let depth = shape.c_in * shape.kh * shape.kw;
    let planes = backends::padded_planes(x, shape.pad);
    let mut cols = vec![0.0f32; depth * oh * ow];
    backends::im2col_planes(&planes, 0, shape.c_in, shape.kh, shape.kw, oh, ow, &mut cols);
    Tensor::from_vec(&[depth, oh * ow], cols)
}

/// Swaps the two leading axes of a rank-4 tensor; output is packed.
pub(crate) fn swap_leading_axes(t: &Tensor) -> Tensor {
    let d = t.dims();
    let (a, b, h) = (d[0], d[1], d[2]);
    let mut out = Tensor::zeros(&[b, a, d[2], d[3]]);
    for i in 0..a {
        for j in 0..b {
            for r in 0..h {
                out.row_mut((j * a + i) * h + r)
                    .copy_from_slice(t.row((i * b + j) * h + r));
            }
        }
    }
    out
}

/// Gradient of a valid convolution with respect to its kernels:
/// `dK[k,c] = sum_n x[n,c] ⋆ dy[n,k]`, returned as `k x c_in x kh x kw`.
///
/// Computed as one valid convolution with the batch and channel axes
/// exchanged, so it goes through the same backends as the forward pass.
pub fn kernel_gradient(
    x: &Tensor,
    dy: &Tensor,
    shape: &ConvShape,
    policy: &ConvPolicy,
) -> Result<Tensor> {
    shape.validate(ConvMode::Valid)?;
    let (oh, ow) = shape.out_dims(ConvMode::Valid);
    if x.dims() != shape.input_dims() || dy.dims() != shape.output_dims(ConvMode::Valid) {
        return Err(shape_err(format!(
            "kernel gradient operands {:?}, {:?} do not match {shape:?}",
            x.dims(),
            dy.dims()
        )));
    }
    let xt = swap_leading_axes(x);
    let dyt = swap_leading_axes(dy);
    let g_shape = ConvShape {
        n: shape.c_in,
        c_in: shape.n,
        k: shape.k,
        kh: oh,
        kw: ow,
        h: shape.h,
        w: shape.w,
        pad: shape.pad,
    };
    let g = conv_valid(&xt, &dyt, &g_shape, policy.valid(&g_shape))?;
    Ok(swap_leading_axes(&g))
}

/// Gradient of a valid convolution with respect to its input: the full
/// convolution of `dy` with the channel-transposed kernels, cropped by the
/// forward padding.
pub fn input_gradient(
    dy: &Tensor,
    kernels: &Tensor,
    shape: &ConvShape,
    policy: &ConvPolicy,
) -> Result<Tensor> {
    shape.validate(ConvMode::Valid)?;
    let (oh, ow) = shape.out_dims(ConvMode::Valid);
    if dy.dims() != shape.output_dims(ConvMode::Valid) || kernels.dims() != shape.kernel_dims() {
        return Err(shape_err(format!(
            "input gradient operands {:?}, {:?} do not match {shape:?}",
            dy.dims(),
            kernels.dims()
        )));
    }
    let kt = swap_leading_axes(kernels);
    let f_shape = ConvShape {
        n: shape.n,
        c_in: shape.k,
        k: shape.c_in,
        kh: shape.kh,
        kw: shape.kw,
        h: oh,
        w: ow,
        pad: 0,
    };
    let full = conv_full(dy, &kt, &f_shape, policy.full(&f_shape))?;
    if shape.pad == 0 {
        return Ok(full);
    }
    let p = shape.pad;
    let (hp, _) = (shape.padded_h(), shape.padded_w());
    let mut out = Tensor::zeros(&shape.input_dims());
    for plane in 0..shape.n * shape.c_in {
        for r in 0..shape.h {
            let src = full.row(plane * hp + r + p);
            out.row_mut(plane * shape.h + r)
                .copy_from_slice(&src[p..p + shape.w]);
        }
    }
    Ok(out)
}

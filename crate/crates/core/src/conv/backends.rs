//! The four convolution implementations.
//!
//! Valid mode is cross-correlation (no kernel flip) summed over input
//! channels. Full mode is the true, flipped convolution. All backends write
//! outputs with the same lane padding as their input.

use rayon::prelude::*;

use super::shape::{ConvMode, ConvShape};
use crate::error::Result;
use crate::kernels::fft::{Complex2D, Fft2Plan};
use crate::kernels::gemm::{sgemm, GemmFlags, MatRef};
use crate::tensor::Tensor;

/// Input planes with a fixed row stride, zero padding already applied.
pub(crate) struct Planes<'a> {
    data: std::borrow::Cow<'a, [f32]>,
    pub h: usize,
    pub ld: usize,
}

impl Planes<'_> {
    #[inline]
    pub fn plane(&self, idx: usize) -> &[f32] {
        let span = self.h * self.ld;
        &self.data[idx * span..(idx + 1) * span]
    }
}

/// Input planes of `x` (n*c planes of h x w) with `pad` zeros on every border.
pub(crate) fn padded_planes(x: &Tensor, pad: usize) -> Planes<'_> {
    let dims = x.dims();
    let (h, w) = (dims[2], dims[3]);
    if pad == 0 {
        return Planes {
            data: std::borrow::Cow::Borrowed(x.as_slice()),
            h,
            ld: x.stride_last(),
        };
    }
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    let planes = dims[0] * dims[1];
    let mut buf = vec![0.0f32; planes * hp * wp];
    for p in 0..planes {
        for r in 0..h {
            let dst = (p * hp + r + pad) * wp + pad;
            buf[dst..dst + w].copy_from_slice(x.row(p * h + r));
        }
    }
    Planes {
        data: std::borrow::Cow::Owned(buf),
        h: hp,
        ld: wp,
    }
}

/// Kernels as a packed `k x (c_in*kh*kw)` buffer.
pub(crate) fn packed_kernels(kernels: &Tensor) -> Vec<f32> {
    kernels.to_vec()
}

/// `out += w ⋆ input` for one plane, generic extents. Accumulation order per
/// output element: kernel row, then kernel column.
fn accumulate_generic(
    input: &[f32],
    ld: usize,
    weights: &[f32],
    kh: usize,
    kw: usize,
    out: &mut [f32],
    out_ld: usize,
    oh: usize,
    ow: usize,
) {
    for a in 0..kh {
        for b in 0..kw {
            let wv = weights[a * kw + b];
            for i in 0..oh {
                let src = &input[(i + a) * ld + b..(i + a) * ld + b + ow];
                let dst = &mut out[i * out_ld..i * out_ld + ow];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += wv * s;
                }
            }
        }
    }
}

/// Unrolled counterpart of [`accumulate_generic`] for compile-time kernel
/// extents. Same per-element summation order, so results are bit-identical.
fn accumulate_fixed<const KH: usize, const KW: usize>(
    input: &[f32],
    ld: usize,
    weights: &[f32],
    out: &mut [f32],
    out_ld: usize,
    oh: usize,
    ow: usize,
) {
    let mut wk = [[0.0f32; KW]; KH];
    for a in 0..KH {
        wk[a].copy_from_slice(&weights[a * KW..(a + 1) * KW]);
    }
    for i in 0..oh {
        let rows: [&[f32]; KH] =
            std::array::from_fn(|a| &input[(i + a) * ld..(i + a) * ld + ow + KW - 1]);
        let dst = &mut out[i * out_ld..i * out_ld + ow];
        for (j, d) in dst.iter_mut().enumerate() {
            let mut acc = *d;
            for a in 0..KH {
                for b in 0..KW {
                    acc += wk[a][b] * rows[a][j + b];
                }
            }
            *d = acc;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PlaneKernel {
    Auto,
    Generic,
}

fn accumulate_plane(
    input: &[f32],
    ld: usize,
    weights: &[f32],
    kh: usize,
    kw: usize,
    out: &mut [f32],
    out_ld: usize,
    oh: usize,
    ow: usize,
    which: PlaneKernel,
) {
    match (which, kh, kw) {
        (PlaneKernel::Auto, 3, 3) => accumulate_fixed::<3, 3>(input, ld, weights, out, out_ld, oh, ow),
        (PlaneKernel::Auto, 5, 5) => accumulate_fixed::<5, 5>(input, ld, weights, out, out_ld, oh, ow),
        _ => accumulate_generic(input, ld, weights, kh, kw, out, out_ld, oh, ow),
    }
}

pub(crate) fn valid_direct_impl(
    x: &Tensor,
    kernels: &Tensor,
    shape: &ConvShape,
    which: PlaneKernel,
) -> Tensor {
    let (oh, ow) = shape.out_dims(ConvMode::Valid);
    let planes = padded_planes(x, shape.pad);
    let weights = packed_kernels(kernels);
    let taps = shape.kh * shape.kw;
    let mut out = Tensor::with_lanes(&shape.output_dims(ConvMode::Valid), x.lanes());
    let out_ld = out.stride_last();
    let (c_in, k) = (shape.c_in, shape.k);
    out.as_mut_slice()
        .par_chunks_mut(oh * out_ld)
        .enumerate()
        .for_each(|(idx, plane_out)| {
            let (img, kk) = (idx / k, idx % k);
            for c in 0..c_in {
                let wts = &weights[(kk * c_in + c) * taps..(kk * c_in + c + 1) * taps];
                accumulate_plane(
                    planes.plane(img * c_in + c),
                    planes.ld,
                    wts,
                    shape.kh,
                    shape.kw,
                    plane_out,
                    out_ld,
                    oh,
                    ow,
                    which,
                );
            }
        });
    out
}

/// Column matrix for one image: rows are (channel, kernel row, kernel col),
/// columns are output positions in row-major order.
pub(crate) fn im2col_planes(
    planes: &Planes<'_>,
    first_plane: usize,
    c_in: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
) {
    let npos = oh * ow;
    for c in 0..c_in {
        let src = planes.plane(first_plane + c);
        for a in 0..kh {
            for b in 0..kw {
                let row = (c * kh + a) * kw + b;
                let dst = &mut cols[row * npos..(row + 1) * npos];
                for i in 0..oh {
                    let s = (i + a) * planes.ld + b;
                    dst[i * ow..(i + 1) * ow].copy_from_slice(&src[s..s + ow]);
                }
            }
        }
    }
}

pub(crate) fn valid_im2col_impl(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Tensor {
    let (oh, ow) = shape.out_dims(ConvMode::Valid);
    let planes = padded_planes(x, shape.pad);
    let weights = packed_kernels(kernels);
    let depth = shape.c_in * shape.kh * shape.kw;
    let npos = oh * ow;
    let mut out = Tensor::with_lanes(&shape.output_dims(ConvMode::Valid), x.lanes());
    let out_ld = out.stride_last();
    let packed_out = out_ld == ow;
    out.as_mut_slice()
        .par_chunks_mut(shape.k * oh * out_ld)
        .enumerate()
        .for_each(|(img, out_img)| {
            let mut cols = vec![0.0f32; depth * npos];
            im2col_planes(&planes, img * shape.c_in, shape.c_in, shape.kh, shape.kw, oh, ow, &mut cols);
            let a = MatRef::new(&weights, shape.k, depth);
            let b = MatRef::new(&cols, depth, npos);
            if packed_out {
                sgemm(a, b, GemmFlags::NN, out_img, npos, false).expect("im2col gemm extents");
            } else {
                let mut tmp = vec![0.0f32; shape.k * npos];
                sgemm(a, b, GemmFlags::NN, &mut tmp, npos, false).expect("im2col gemm extents");
                for (r, src) in tmp.chunks_exact(ow).enumerate() {
                    out_img[r * out_ld..r * out_ld + ow].copy_from_slice(src);
                }
            }
        });
    out
}

/// Full convolution through the frequency domain. Each input plane and
/// each kernel plane is transformed once; channel sums happen on spectra.
pub(crate) fn full_fft_impl(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Result<Tensor> {
    let (oh, ow) = shape.out_dims(ConvMode::Full);
    let plan = Fft2Plan::new(oh.next_power_of_two(), ow.next_power_of_two())?;
    let (c_in, k, pad) = (shape.c_in, shape.k, shape.pad);
    let (h, w) = (shape.h, shape.w);

    let kernel_ld = kernels.stride_last();
    let kernel_plane = shape.kh * kernel_ld;
    let kernel_specs: Vec<Complex2D> = (0..k * c_in)
        .into_par_iter()
        .map(|p| {
            let src = &kernels.as_slice()[p * kernel_plane..(p + 1) * kernel_plane];
            plan.forward_real(src, shape.kh, shape.kw, kernel_ld, 0, 0)
        })
        .collect();

    let mut out = Tensor::with_lanes(&shape.output_dims(ConvMode::Full), x.lanes());
    let out_ld = out.stride_last();
    let in_ld = x.stride_last();
    let in_plane = h * in_ld;
    out.as_mut_slice()
        .par_chunks_mut(k * oh * out_ld)
        .enumerate()
        .for_each(|(img, out_img)| {
            let input_specs: Vec<Complex2D> = (0..c_in)
                .map(|c| {
                    let p = img * c_in + c;
                    let src = &x.as_slice()[p * in_plane..(p + 1) * in_plane];
                    plan.forward_real(src, h, w, in_ld, pad, pad)
                })
                .collect();
            for kk in 0..k {
                let mut acc = Complex2D::zeros(plan.rows(), plan.cols());
                for (c, spec) in input_specs.iter().enumerate() {
                    crate::kernels::fft::hadamard_accumulate(&mut acc, spec, &kernel_specs[kk * c_in + c])
                        .expect("equal spectra");
                }
                let real = plan.inverse_real(acc);
                let dst = &mut out_img[kk * oh * out_ld..(kk + 1) * oh * out_ld];
                for r in 0..oh {
                    dst[r * out_ld..r * out_ld + ow]
                        .copy_from_slice(&real[r * plan.cols()..r * plan.cols() + ow]);
                }
            }
        });
    Ok(out)
}

/// Kernels rotated by 180 degrees in both spatial axes.
pub(crate) fn flip_kernels(kernels: &Tensor) -> Tensor {
    let d = kernels.dims();
    let (kh, kw) = (d[2], d[3]);
    let mut out = kernels.zeros_like();
    for p in 0..d[0] * d[1] {
        for a in 0..kh {
            let src = kernels.row(p * kh + a);
            let dst = out.row_mut(p * kh + (kh - 1 - a));
            for b in 0..kw {
                dst[kw - 1 - b] = src[b];
            }
        }
    }
    out
}

/// Full convolution as a valid cross-correlation of the input padded by
/// `kernel - 1` with flipped kernels.
pub(crate) fn full_padded_valid_impl(x: &Tensor, kernels: &Tensor, shape: &ConvShape) -> Tensor {
    let flipped = flip_kernels(kernels);
    // Asymmetric kernels need independent padding per axis, so build the
    // padded input explicitly instead of going through `shape.pad`.
    let (ph, pw) = (shape.pad + shape.kh - 1, shape.pad + shape.kw - 1);
    let (hp, wp) = (shape.h + 2 * ph, shape.w + 2 * pw);
    let mut padded = Tensor::with_lanes(&[shape.n, shape.c_in, hp, wp], x.lanes());
    for p in 0..shape.n * shape.c_in {
        for r in 0..shape.h {
            let dst = padded.row_mut(p * hp + r + ph);
            dst[pw..pw + shape.w].copy_from_slice(x.row(p * shape.h + r));
        }
    }
    let inner = ConvShape {
        h: hp,
        w: wp,
        pad: 0,
        ..*shape
    };
    valid_direct_impl(&padded, &flipped, &inner, PlaneKernel::Auto)
}

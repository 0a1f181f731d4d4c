//! Radix-2 2-D FFT over single-precision data.
//!
//! Row-column decomposition of an iterative in-place Cooley–Tukey transform.
//! Extents must be powers of two; convolution callers zero-pad up to them.

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Split-complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Complex2D {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f32>,
    pub im: Vec<f32>,
}

impl Complex2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Complex2D {
            rows,
            cols,
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
        }
    }

    pub fn from_parts(rows: usize, cols: usize, re: Vec<f32>, im: Vec<f32>) -> Result<Self> {
        if re.len() != rows * cols || im.len() != rows * cols {
            return Err(shape_err(format!(
                "complex {rows}x{cols} needs {} values per part",
                rows * cols
            )));
        }
        Ok(Complex2D { rows, cols, re, im })
    }

    fn same_dims(&self, other: &Complex2D) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(shape_err(format!(
                "complex dims differ: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Precomputed twiddles and bit-reversal table for one power-of-two length.
#[derive(Clone, Debug)]
struct Plan1d {
    n: usize,
    cos: Vec<f32>,
    sin: Vec<f32>,
    rev: Vec<u32>,
}

impl Plan1d {
    fn new(n: usize) -> Self {
        let bits = n.trailing_zeros();
        let rev = (0..n as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        let half = n / 2;
        let (cos, sin) = (0..half)
            .map(|j| {
                let t = -2.0 * std::f64::consts::PI * j as f64 / n as f64;
                (t.cos() as f32, t.sin() as f32)
            })
            .unzip();
        Plan1d { n, cos, sin, rev }
    }

    /// In-place forward transform; `inverse` conjugates the twiddles.
    fn run(&self, re: &mut [f32], im: &mut [f32], inverse: bool) {
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i] as usize;
            if i < j {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let sign = if inverse { -1.0 } else { 1.0 };
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for j in 0..half {
                    let wr = self.cos[j * step];
                    let wi = sign * self.sin[j * step];
                    let (a, b) = (start + j, start + j + half);
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len <<= 1;
        }
    }
}

/// Reusable 2-D plan for a fixed power-of-two size.
#[derive(Clone, Debug)]
pub struct Fft2Plan {
    rows: Plan1d,
    cols: Plan1d,
}

fn check_pow2(n: usize, what: &str) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(shape_err(format!(
            "FFT {what} extent {n} is not a power of two"
        )));
    }
    Ok(())
}

impl Fft2Plan {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        check_pow2(rows, "row")?;
        check_pow2(cols, "column")?;
        Ok(Fft2Plan {
            rows: Plan1d::new(rows),
            cols: Plan1d::new(cols),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows.n
    }

    pub fn cols(&self) -> usize {
        self.cols.n
    }

    /// Transforms an `h x w` real block (row stride `ld`) zero-padded to
    /// the plan size and placed at offset (`r0`, `c0`).
    pub fn forward_real(
        &self,
        src: &[f32],
        h: usize,
        w: usize,
        ld: usize,
        r0: usize,
        c0: usize,
    ) -> Complex2D {
        let (rows, cols) = (self.rows.n, self.cols.n);
        debug_assert!(r0 + h <= rows && c0 + w <= cols);
        let mut out = Complex2D::zeros(rows, cols);
        for r in 0..h {
            out.re[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + w]
                .copy_from_slice(&src[r * ld..r * ld + w]);
        }
        self.transform(&mut out, false);
        out
    }

    pub fn transform(&self, x: &mut Complex2D, inverse: bool) {
        let (rows, cols) = (self.rows.n, self.cols.n);
        assert!(x.rows == rows && x.cols == cols, "plan/data size mismatch");
        for r in 0..rows {
            let s = r * cols;
            self.cols
                .run(&mut x.re[s..s + cols], &mut x.im[s..s + cols], inverse);
        }
        let mut cre = vec![0.0f32; rows];
        let mut cim = vec![0.0f32; rows];
        for c in 0..cols {
            for r in 0..rows {
                cre[r] = x.re[r * cols + c];
                cim[r] = x.im[r * cols + c];
            }
            self.rows.run(&mut cre, &mut cim, inverse);
            for r in 0..rows {
                x.re[r * cols + c] = cre[r];
                x.im[r * cols + c] = cim[r];
            }
        }
    }

    /// Inverse transform with 1/(rows·cols) scaling; returns the real part.
    pub fn inverse_real(&self, mut x: Complex2D) -> Vec<f32> {
        self.transform(&mut x, true);
        let scale = 1.0 / (self.rows.n * self.cols.n) as f32;
        x.re.iter_mut().for_each(|v| *v *= scale);
        x.re
    }
}

fn matrix_dims(x: &Tensor) -> Result<(usize, usize)> {
    if x.rank() != 2 {
        return Err(shape_err(format!("fft2 expects a matrix, got {:?}", x.dims())));
    }
    Ok((x.dims()[0], x.dims()[1]))
}

/// Forward 2-D DFT of a real matrix with power-of-two extents.
pub fn fft2(x: &Tensor) -> Result<Complex2D> {
    let (rows, cols) = matrix_dims(x)?;
    let plan = Fft2Plan::new(rows, cols)?;
    Ok(plan.forward_real(x.as_slice(), rows, cols, x.stride_last(), 0, 0))
}

/// Inverse 2-D DFT (normalized), returning the real part as a packed matrix.
pub fn ifft2(x: &Complex2D) -> Result<Tensor> {
    let plan = Fft2Plan::new(x.rows, x.cols)?;
    let re = plan.inverse_real(x.clone());
    Tensor::from_vec(&[x.rows, x.cols], re)
}

/// Elementwise complex product.
pub fn hadamard(a: &Complex2D, b: &Complex2D) -> Result<Complex2D> {
    a.same_dims(b)?;
    let mut out = Complex2D::zeros(a.rows, a.cols);
    hadamard_accumulate(&mut out, a, b)?;
    Ok(out)
}

/// `acc += a ⊙ b`.
pub fn hadamard_accumulate(acc: &mut Complex2D, a: &Complex2D, b: &Complex2D) -> Result<()> {
    a.same_dims(b)?;
    acc.same_dims(a)?;
    for i in 0..a.re.len() {
        let (ar, ai, br, bi) = (a.re[i], a.im[i], b.re[i], b.im[i]);
        acc.re[i] += ar * br - ai * bi;
        acc.im[i] += ar * bi + ai * br;
    }
    Ok(())
}

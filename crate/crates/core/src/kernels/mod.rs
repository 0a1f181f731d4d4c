//! Numeric kernels: GEMM, 2-D FFT and vectorized elementwise maps.

pub mod elementwise;
pub mod fft;
pub mod gemm;

pub use elementwise::{elementwise_apply, elementwise_inplace, elementwise_zip};
pub use fft::{fft2, hadamard, hadamard_accumulate, ifft2, Complex2D, Fft2Plan};
pub use gemm::{
    gemm, set_small_gemm_threshold, sgemm, sgemm_with_path, small_gemm_threshold, GemmFlags,
    GemmPath, MatRef,
};

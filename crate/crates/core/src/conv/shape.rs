use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvMode {
    Valid,
    Full,
}

impl ConvMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConvMode::Valid => "valid",
            ConvMode::Full => "full",
        }
    }
}

/// A batched 2-D convolution problem: `n` images of `c_in x h x w`
/// against `k` kernels of `c_in x kh x kw`, with symmetric zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvShape {
    pub n: usize,
    pub c_in: usize,
    pub k: usize,
    pub kh: usize,
    pub kw: usize,
    pub h: usize,
    pub w: usize,
    pub pad: usize,
}

impl ConvShape {
    pub fn new(n: usize, c_in: usize, k: usize, (kh, kw): (usize, usize), (h, w): (usize, usize)) -> Self {
        ConvShape {
            n,
            c_in,
            k,
            kh,
            kw,
            h,
            w,
            pad: 0,
        }
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.pad = pad;
        self
    }

    pub fn padded_h(&self) -> usize {
        self.h + 2 * self.pad
    }

    pub fn padded_w(&self) -> usize {
        self.w + 2 * self.pad
    }

    pub fn kernel_area(&self) -> usize {
        self.kh * self.kw
    }

    pub fn image_area(&self) -> usize {
        self.h * self.w
    }

    pub fn out_dims(&self, mode: ConvMode) -> (usize, usize) {
        match mode {
            ConvMode::Valid => (
                self.padded_h() + 1 - self.kh,
                self.padded_w() + 1 - self.kw,
            ),
            ConvMode::Full => (
                self.padded_h() + self.kh - 1,
                self.padded_w() + self.kw - 1,
            ),
        }
    }

    pub fn output_dims(&self, mode: ConvMode) -> [usize; 4] {
        let (oh, ow) = self.out_dims(mode);
        [self.n, self.k, oh, ow]
    }

    pub fn input_dims(&self) -> [usize; 4] {
        [self.n, self.c_in, self.h, self.w]
    }

    pub fn kernel_dims(&self) -> [usize; 4] {
        [self.k, self.c_in, self.kh, self.kw]
    }

    pub fn validate(&self, mode: ConvMode) -> Result<()> {
        let extents = [self.n, self.c_in, self.k, self.kh, self.kw, self.h, self.w];
        if extents.contains(&0) {
            return Err(shape_err(format!("zero extent in {self:?}")));
        }
        if mode == ConvMode::Valid && (self.kh > self.padded_h() || self.kw > self.padded_w()) {
            return Err(shape_err(format!(
                "kernel {}x{} larger than padded input {}x{}",
                self.kh,
                self.kw,
                self.padded_h(),
                self.padded_w()
            )));
        }
        Ok(())
    }

    /// Validates `shape` for `mode` and checks both operand shapes.
    pub fn check_operands(&self, mode: ConvMode, x: &Tensor, kernels: &Tensor) -> Result<()> {
        self.validate(mode)?;
        if x.dims() != self.input_dims() {
            return Err(shape_err(format!(
                "input {:?} does not match {:?}",
                x.dims(),
                self.input_dims()
            )));
        }
        if kernels.dims() != self.kernel_dims() {
            return Err(shape_err(format!(
                "kernels {:?} do not match {:?}",
                kernels.dims(),
                self.kernel_dims()
            )));
        }
        Ok(())
    }
}

/// Convolution implementation strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvBackend {
    DirectValid,
    Im2colGemm,
    FftFull,
    PaddedValidFull,
}

impl ConvBackend {
    pub const ALL: [ConvBackend; 4] = [
        ConvBackend::DirectValid,
        ConvBackend::Im2colGemm,
        ConvBackend::FftFull,
        ConvBackend::PaddedValidFull,
    ];

    pub fn mode(self) -> ConvMode {
        match self {
            ConvBackend::DirectValid | ConvBackend::Im2colGemm => ConvMode::Valid,
            ConvBackend::FftFull | ConvBackend::PaddedValidFull => ConvMode::Full,
        }
    }

    pub fn for_mode(mode: ConvMode) -> &'static [ConvBackend] {
        match mode {
            ConvMode::Valid => &[ConvBackend::DirectValid, ConvBackend::Im2colGemm],
            ConvMode::Full => &[ConvBackend::FftFull, ConvBackend::PaddedValidFull],
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ConvBackend::DirectValid => "DirectValid",
            ConvBackend::Im2colGemm => "Im2colGemm",
            ConvBackend::FftFull => "FftFull",
            ConvBackend::PaddedValidFull => "PaddedValidFull",
        }
    }
}

impl fmt::Display for ConvBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ConvBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConvBackend::ALL
            .into_iter()
            .find(|b| b.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown convolution backend {s:?}")))
    }
}

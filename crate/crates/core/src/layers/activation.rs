use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::kernels::elementwise::{elementwise_apply, elementwise_zip};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::InvalidParameter(format!("unknown activation {s:?}"))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn relu(x: f32) -> f32 {
    x.max(0.0)
}

pub fn activation_apply(kind: Activation, x: &Tensor) -> Tensor {
    match kind {
        Activation::Sigmoid => elementwise_apply(x, sigmoid),
        Activation::Relu => elementwise_apply(x, relu),
    }
}

/// Gradient from the forward *output* `y`. For ReLU, `y > 0` exactly when
/// the pre-activation was positive.
pub fn activation_gradient(kind: Activation, y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if y.dims() != dy.dims() {
        return Err(shape_err(format!(
            "activation gradient {:?} vs output {:?}",
            dy.dims(),
            y.dims()
        )));
    }
    let dy = if dy.stride_last() == y.stride_last() {
        std::borrow::Cow::Borrowed(dy)
    } else {
        std::borrow::Cow::Owned(dy.copy_into_padded(y.lanes()))
    };
    Ok(match kind {
        Activation::Sigmoid => elementwise_zip(y, &dy, |y, g| g * y * (1.0 - y)),
        Activation::Relu => elementwise_zip(y, &dy, |y, g| if y > 0.0 { g } else { 0.0 }),
    })
}

/// Row-wise softmax over the last axis of a `batch x classes` matrix.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(shape_err(format!("softmax expects a matrix, got {:?}", x.dims())));
    }
    let mut y = x.clone();
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(y)
}

/// Vector-Jacobian product of softmax given its output `y`:
/// `dx = y ⊙ (dy − Σ dy⊙y)` per row.
pub fn softmax_backward(y: &Tensor, dy: &Tensor) -> Result<Tensor> {
    if y.dims() != dy.dims() || y.rank() != 2 {
        return Err(shape_err("softmax gradient shape mismatch"));
    }
    let mut dx = Tensor::zeros(y.dims());
    for r in 0..y.rows() {
        let (yr, gr) = (y.row(r), dy.row(r));
        let dot: f32 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((d, &yv), &g) in dx.row_mut(r).iter_mut().zip(yr).zip(gr) {
            *d = yv * (g - dot);
        }
    }
    Ok(dx)
}

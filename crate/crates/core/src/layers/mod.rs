//! Differentiable layers.
//!
//! Each layer kind has free-standing forward/backward functions; [`Layer`]
//! wraps them behind one interface for the sequential network.

mod activation;
mod batchnorm;
mod conv_layer;
mod dense;
mod dropout;
mod init;
mod pool;
#[cfg(test)]
pub(crate) mod testing;

pub use activation::{
    activation_apply, activation_gradient, relu, sigmoid, softmax, softmax_backward, Activation,
};
pub use batchnorm::{BatchNormCache, BatchNormState, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use conv_layer::ConvLayer;
pub use dense::DenseLayer;
pub use dropout::{dropout_backward, dropout_forward, DropoutMask};
pub use init::glorot_uniform;
pub use pool::{pool_backward, pool_forward, ArgMax, PoolMode, PoolWindow};

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Pool { mode: PoolMode, window: PoolWindow },
    Activation(Activation),
    /// Row-wise softmax. As the last layer under cross-entropy its gradient
    /// is folded into the loss.
    Softmax,
    Dropout { p: f32 },
    BatchNorm(BatchNormState),
}

/// Per-layer state a forward pass leaves for the matching backward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum Aux {
    None,
    ArgMax(ArgMax),
    Dropout(DropoutMask),
    BatchNorm(BatchNormCache),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::Pool { mode: PoolMode::Max, .. } => "max_pool",
            Layer::Pool { mode: PoolMode::Avg, .. } => "avg_pool",
            Layer::Activation(a) => a.name(),
            Layer::Softmax => "softmax",
            Layer::Dropout { .. } => "dropout",
            Layer::BatchNorm(_) => "batch_norm",
        }
    }

    /// Output dimensions of one sample given the input sample dimensions.
    pub fn output_sample_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        let flat: usize = input.iter().product();
        match self {
            Layer::Dense(d) => {
                if flat != d.in_units() {
                    return Err(shape_err(format!(
                        "dense layer takes {} inputs, got {input:?}",
                        d.in_units()
                    )));
                }
                Ok(vec![d.out_units()])
            }
            Layer::Conv(c) => {
                if input != c.input_sample_dims() {
                    return Err(shape_err(format!(
                        "conv layer takes {:?}, got {input:?}",
                        c.input_sample_dims()
                    )));
                }
                Ok(c.output_sample_dims().to_vec())
            }
            Layer::Pool { window, .. } => {
                if input.len() != 3 || input[1] % window.h != 0 || input[2] % window.w != 0 {
                    return Err(shape_err(format!(
                        "pooling {}x{} cannot tile {input:?}",
                        window.h, window.w
                    )));
                }
                Ok(vec![input[0], input[1] / window.h, input[2] / window.w])
            }
            Layer::Softmax if input.len() != 1 => Err(shape_err(format!(
                "softmax takes a flat vector, got {input:?}"
            ))),
            Layer::BatchNorm(bn) if flat != bn.features() => Err(shape_err(format!(
                "batch norm over {} features got {input:?}",
                bn.features()
            ))),
            _ => Ok(input.to_vec()),
        }
    }

    /// `training` enables dropout and batch statistics. Batch norm updates
    /// its running statistics, hence `&mut self`.
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x: &Tensor,
        training: bool,
        rng: &mut R,
    ) -> Result<(Tensor, Aux)> {
        match self {
            Layer::Dense(d) => Ok((d.forward(x)?, Aux::None)),
            Layer::Conv(c) => Ok((c.forward(x)?, Aux::None)),
            Layer::Pool { mode, window } => {
                let (y, arg) = pool_forward(*mode, x, *window)?;
                Ok((y, arg.map_or(Aux::None, Aux::ArgMax)))
            }
            Layer::Activation(a) => Ok((activation_apply(*a, x), Aux::None)),
            Layer::Softmax => Ok((softmax(x)?, Aux::None)),
            Layer::Dropout { p } => {
                let (y, m) = dropout_forward(*p, x, training, rng)?;
                Ok((y, Aux::Dropout(m)))
            }
            Layer::BatchNorm(bn) => {
                let (y, cache) = bn.forward(x, training)?;
                Ok((y, cache.map_or(Aux::None, Aux::BatchNorm)))
            }
        }
    }

    /// Inference-mode forward that leaves the layer untouched.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(d) => d.forward(x),
            Layer::Conv(c) => c.forward(x),
            Layer::Pool { mode, window } => Ok(pool_forward(*mode, x, *window)?.0),
            Layer::Activation(a) => Ok(activation_apply(*a, x)),
            Layer::Softmax => softmax(x),
            Layer::Dropout { .. } => Ok(x.clone()),
            Layer::BatchNorm(bn) => Ok(bn.clone().forward(x, false)?.0),
        }
    }

    /// Returns the gradient with respect to `x` and accumulates parameter
    /// gradients. `y` is the forward output for `x`.
    pub fn backward(&mut self, x: &Tensor, y: &Tensor, aux: &Aux, dy: &Tensor) -> Result<Tensor> {
        match (self, aux) {
            (Layer::Dense(d), _) => d.backward(x, dy),
            (Layer::Conv(c), _) => c.backward(x, dy),
            (Layer::Pool { mode, window }, aux) => {
                let arg = match aux {
                    Aux::ArgMax(a) => Some(a),
                    _ => None,
                };
                pool_backward(*mode, dy, arg, x.dims(), *window)
            }
            (Layer::Activation(a), _) => activation_gradient(*a, y, dy),
            (Layer::Softmax, _) => softmax_backward(y, dy),
            (Layer::Dropout { .. }, Aux::Dropout(m)) => dropout_backward(m, dy),
            (Layer::Dropout { .. }, _) => Ok(dy.clone()),
            (Layer::BatchNorm(bn), Aux::BatchNorm(cache)) => bn.backward(cache, dy),
            (Layer::BatchNorm(_), _) => Err(shape_err("batch norm backward needs a training forward")),
        }
    }

    /// `(parameter, gradient)` pairs in a fixed order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Dense(d) => vec![(&mut d.w, &mut d.gw), (&mut d.b, &mut d.gb)],
            Layer::Conv(c) => vec![(&mut c.kernels, &mut c.g_kernels), (&mut c.b, &mut c.gb)],
            Layer::BatchNorm(bn) => vec![(&mut bn.gamma, &mut bn.g_gamma), (&mut bn.beta, &mut bn.g_beta)],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.w, &d.b],
            Layer::Conv(c) => vec![&c.kernels, &c.b],
            Layer::BatchNorm(bn) => vec![&bn.gamma, &bn.beta],
            _ => Vec::new(),
        }
    }

    pub fn grads(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(d) => vec![&d.gw, &d.gb],
            Layer::Conv(c) => vec![&c.g_kernels, &c.gb],
            Layer::BatchNorm(bn) => vec![&bn.g_gamma, &bn.g_beta],
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        match self {
            Layer::Dense(d) => d.zero_grad(),
            Layer::Conv(c) => c.zero_grad(),
            Layer::BatchNorm(bn) => bn.zero_grad(),
            _ => {}
        }
    }
}

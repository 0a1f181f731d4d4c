use rand::Rng;

use super::init::glorot_uniform;
use crate::conv::{conv_valid, input_gradient, kernel_gradient, ConvMode, ConvPolicy, ConvShape};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Convolutional layer: valid convolution of the input with `k` kernels plus
/// a bias per kernel.
#[derive(Clone, Debug)]
pub struct ConvLayer {
    /// `k x c_in x kh x kw`
    pub kernels: Tensor,
    pub b: Tensor,
    pub g_kernels: Tensor,
    pub gb: Tensor,
    /// Geometry of one sample; the batch extent is taken from each input.
    pub shape: ConvShape,
    pub policy: ConvPolicy,
}

impl PartialEq for ConvLayer {
    fn eq(&self, other: &Self) -> bool {
        self.kernels == other.kernels
            && self.b == other.b
            && self.g_kernels == other.g_kernels
            && self.gb == other.gb
            && self.shape == other.shape
    }
}

impl ConvLayer {
    pub fn new<R: Rng + ?Sized>(shape: ConvShape, rng: &mut R) -> Result<Self> {
        let taps = shape.kh * shape.kw;
        let kernels = glorot_uniform(&shape.kernel_dims(), shape.c_in * taps, shape.k * taps, rng);
        Self::from_parts(shape, kernels, Tensor::zeros(&[shape.k]))
    }

    pub fn from_parts(shape: ConvShape, kernels: Tensor, b: Tensor) -> Result<Self> {
        let shape = ConvShape { n: 1, ..shape };
        shape.validate(ConvMode::Valid)?;
        if kernels.dims() != shape.kernel_dims() || b.dims() != [shape.k] {
            return Err(shape_err(format!(
                "conv parts {:?} / {:?} do not match {shape:?}",
                kernels.dims(),
                b.dims()
            )));
        }
        let kernels = kernels.to_packed();
        Ok(ConvLayer {
            g_kernels: kernels.zeros_like(),
            gb: b.zeros_like(),
            kernels,
            b,
            shape,
            policy: ConvPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: ConvPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn batch_shape(&self, n: usize) -> ConvShape {
        ConvShape { n, ..self.shape }
    }

    /// `[c_in, h, w]` of one input sample.
    pub fn input_sample_dims(&self) -> [usize; 3] {
        [self.shape.c_in, self.shape.h, self.shape.w]
    }

    /// `[k, out_h, out_w]` of one output sample.
    pub fn output_sample_dims(&self) -> [usize; 3] {
        let (oh, ow) = self.shape.out_dims(ConvMode::Valid);
        [self.shape.k, oh, ow]
    }

    fn shape_for(&self, x: &Tensor) -> Result<ConvShape> {
        if x.rank() != 4 || x.dims()[1..] != self.input_sample_dims() {
            return Err(shape_err(format!(
                "conv layer expects [n, {}, {}, {}], got {:?}",
                self.shape.c_in,
                self.shape.h,
                self.shape.w,
                x.dims()
            )));
        }
        Ok(self.batch_shape(x.dims()[0]))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let shape = self.shape_for(x)?;
        let mut y = conv_valid(x, &self.kernels, &shape, self.policy.valid(&shape))?;
        let (oh, _) = shape.out_dims(ConvMode::Valid);
        let k = shape.k;
        let b = self.b.as_slice();
        for r in 0..y.rows() {
            let bias = b[(r / oh) % k];
            y.row_mut(r).iter_mut().for_each(|v| *v += bias);
        }
        Ok(y)
    }

    /// Returns `dx`; accumulates kernel and bias gradients.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        let shape = self.shape_for(x)?;
        if dy.dims() != shape.output_dims(ConvMode::Valid) {
            return Err(shape_err(format!(
                "conv gradient {:?} does not match output {:?}",
                dy.dims(),
                shape.output_dims(ConvMode::Valid)
            )));
        }
        let gk = kernel_gradient(x, dy, &shape, &self.policy)?;
        for (a, g) in self.g_kernels.as_mut_slice().iter_mut().zip(gk.logical_iter()) {
            *a += g;
        }
        let (oh, _) = shape.out_dims(ConvMode::Valid);
        let gb = self.gb.as_mut_slice();
        for r in 0..dy.rows() {
            gb[(r / oh) % shape.k] += dy.row(r).iter().sum::<f32>();
        }
        input_gradient(dy, &self.kernels, &shape, &self.policy)
    }

    pub fn zero_grad(&mut self) {
        self.g_kernels.fill(0.0);
        self.gb.fill(0.0);
    }
}

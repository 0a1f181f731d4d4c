use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::rbm::{unit_means, unit_samples, UnitKind};
use crate::conv::{conv_valid, input_gradient, kernel_gradient, ConvMode, ConvPolicy, ConvShape};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Convolutional RBM without probabilistic max pooling. Hidden maps share
/// one bias per kernel, visible maps one bias per input channel.
#[derive(Clone, Debug)]
pub struct Crbm {
    /// `k x c_in x kh x kw`
    pub kernels: Tensor,
    pub bv: Tensor,
    pub bh: Tensor,
    pub visible_kind: UnitKind,
    pub hidden_kind: UnitKind,
    /// Geometry of one sample.
    pub shape: ConvShape,
    pub policy: ConvPolicy,
}

impl Crbm {
    pub fn new<R: Rng + ?Sized>(
        shape: ConvShape,
        visible_kind: UnitKind,
        hidden_kind: UnitKind,
        rng: &mut R,
    ) -> Result<Self> {
        let normal = Normal::new(0.0f32, 0.01).expect("valid normal");
        let len = shape.kernel_dims().iter().product();
        let kernels = Tensor::from_vec(&shape.kernel_dims(), (0..len).map(|_| normal.sample(rng)).collect())?;
        Self::from_parts(
            shape,
            kernels,
            Tensor::zeros(&[shape.c_in]),
            Tensor::zeros(&[shape.k]),
            visible_kind,
            hidden_kind,
        )
    }

    pub fn from_parts(
        shape: ConvShape,
        kernels: Tensor,
        bv: Tensor,
        bh: Tensor,
        visible_kind: UnitKind,
        hidden_kind: UnitKind,
    ) -> Result<Self> {
        let shape = ConvShape { n: 1, pad: 0, ..shape };
        shape.validate(ConvMode::Valid)?;
        if kernels.dims() != shape.kernel_dims() || bv.dims() != [shape.c_in] || bh.dims() != [shape.k] {
            return Err(shape_err(format!(
                "crbm parts {:?}, {:?}, {:?} do not match {shape:?}",
                kernels.dims(),
                bv.dims(),
                bh.dims()
            )));
        }
        Ok(Crbm {
            kernels: kernels.to_packed(),
            bv: bv.to_packed(),
            bh: bh.to_packed(),
            visible_kind,
            hidden_kind,
            shape,
            policy: ConvPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: ConvPolicy) -> Self {
        self.policy = policy;
        self
    }

    fn shape_for(&self, v: &Tensor) -> Result<ConvShape> {
        let s = &self.shape;
        if v.rank() != 4 || v.dims()[1..] != [s.c_in, s.h, s.w] {
            return Err(shape_err(format!(
                "crbm expects [n, {}, {}, {}], got {:?}",
                s.c_in,
                s.h,
                s.w,
                v.dims()
            )));
        }
        Ok(ConvShape { n: v.dims()[0], ..*s })
    }

    /// Hidden pre-activations: valid convolution plus kernel bias.
    pub fn hidden_pre(&self, v: &Tensor) -> Result<Tensor> {
        let shape = self.shape_for(v)?;
        let mut a = conv_valid(v, &self.kernels, &shape, self.policy.valid(&shape))?.to_packed();
        add_plane_bias(&mut a, self.bh.as_slice());
        Ok(a)
    }

    /// Visible pre-activations: full convolution of the hidden maps with the
    /// channel-transposed kernels plus channel bias.
    pub fn visible_pre(&self, h: &Tensor) -> Result<Tensor> {
        let n = h.dims().first().copied().unwrap_or(0);
        let shape = ConvShape { n, ..self.shape };
        let mut a = input_gradient(h, &self.kernels, &shape, &self.policy)?.to_packed();
        add_plane_bias(&mut a, self.bv.as_slice());
        Ok(a)
    }

    pub fn hidden_given_visible<R: Rng + ?Sized>(&self, v: &Tensor, rng: &mut R, sample: bool) -> Result<Tensor> {
        let mut a = self.hidden_pre(v)?;
        activate(self.hidden_kind, &mut a, rng, sample);
        Ok(a)
    }

    pub fn visible_given_hidden<R: Rng + ?Sized>(&self, h: &Tensor, rng: &mut R, sample: bool) -> Result<Tensor> {
        let mut a = self.visible_pre(h)?;
        activate(self.visible_kind, &mut a, rng, sample);
        Ok(a)
    }

    /// One CD-1 update; same recipe as the dense RBM. Returns the
    /// reconstruction error per sample.
    pub fn cd1<R: Rng + ?Sized>(&mut self, v0: &Tensor, lr: f32, rng: &mut R) -> Result<f32> {
        let shape = self.shape_for(v0)?;
        let batch = shape.n;
        let v0 = v0.to_packed();
        let h0_pre = self.hidden_pre(&v0)?;
        let mut h0 = h0_pre.clone();
        unit_means(self.hidden_kind, h0.as_mut_slice());
        let mut h_state = h0_pre;
        unit_samples(self.hidden_kind, h_state.as_mut_slice(), rng);

        let mut v1 = self.visible_pre(&h_state)?;
        unit_means(self.visible_kind, v1.as_mut_slice());
        let recon = v0
            .as_slice()
            .iter()
            .zip(v1.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f32>()
            / batch as f32;
        let mut h1 = self.hidden_pre(&v1)?;
        unit_means(self.hidden_kind, h1.as_mut_slice());

        let pos = kernel_gradient(&v0, &h0, &shape, &self.policy)?;
        let neg = kernel_gradient(&v1, &h1, &shape, &self.policy)?;
        let scale = lr / batch as f32;
        for ((w, p), n) in self.kernels.as_mut_slice().iter_mut().zip(pos.logical_iter()).zip(neg.logical_iter()) {
            *w += scale * (p - n);
        }
        plane_bias_step(self.bv.as_mut_slice(), &v0, &v1, scale);
        plane_bias_step(self.bh.as_mut_slice(), &h0, &h1, scale);
        Ok(recon)
    }
}

impl PartialEq for Crbm {
    fn eq(&self, other: &Self) -> bool {
        self.kernels == other.kernels
            && self.bv == other.bv
            && self.bh == other.bh
            && self.visible_kind == other.visible_kind
            && self.hidden_kind == other.hidden_kind
            && self.shape == other.shape
    }
}

fn activate<R: Rng + ?Sized>(kind: UnitKind, t: &mut Tensor, rng: &mut R, sample: bool) {
    if sample {
        unit_samples(kind, t.as_mut_slice(), rng);
    } else {
        unit_means(kind, t.as_mut_slice());
    }
}

/// Adds `bias[c]` to every element of channel `c` of a packed rank-4 tensor.
fn add_plane_bias(t: &mut Tensor, bias: &[f32]) {
    let d = t.dims().to_vec();
    let span = d[2] * d[3];
    for (p, plane) in t.as_mut_slice().chunks_exact_mut(span).enumerate() {
        let b = bias[p % d[1]];
        plane.iter_mut().for_each(|v| *v += b);
    }
}

/// `b[c] += scale · Σ_{n, i, j} (pos − neg)` over channel `c`.
fn plane_bias_step(b: &mut [f32], pos: &Tensor, neg: &Tensor, scale: f32) {
    let d = pos.dims();
    let span = d[2] * d[3];
    let mut acc = vec![0.0f32; d[1]];
    for (p, (pp, np)) in pos
        .as_slice()
        .chunks_exact(span)
        .zip(neg.as_slice().chunks_exact(span))
        .enumerate()
    {
        for (&x, &y) in pp.iter().zip(np) {
            acc[p % d[1]] += x - y;
        }
    }
    for (bb, a) in b.iter_mut().zip(&acc) {
        *bb += scale * a;
    }
}

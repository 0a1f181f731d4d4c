use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{shape_err, Error, Result};
use crate::kernels::gemm::{sgemm, GemmFlags, MatRef};
use crate::layers::sigmoid;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnitKind {
    Binary,
    Gaussian,
    Relu,
}

impl UnitKind {
    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Binary => "binary",
            UnitKind::Gaussian => "gaussian",
            UnitKind::Relu => "relu",
        }
    }
}

/// Replaces pre-activations by unit means.
pub(crate) fn unit_means(kind: UnitKind, pre: &mut [f32]) {
    match kind {
        UnitKind::Binary => pre.iter_mut().for_each(|a| *a = sigmoid(*a)),
        UnitKind::Gaussian => {}
        UnitKind::Relu => pre.iter_mut().for_each(|a| *a = a.max(0.0)),
    }
}

/// Replaces pre-activations by sampled states, one draw per element in
/// row-major order.
pub(crate) fn unit_samples<R: Rng + ?Sized>(kind: UnitKind, pre: &mut [f32], rng: &mut R) {
    match kind {
        UnitKind::Binary => pre.iter_mut().for_each(|a| {
            let p = sigmoid(*a);
            *a = if rng.random::<f32>() < p { 1.0 } else { 0.0 };
        }),
        UnitKind::Gaussian => pre.iter_mut().for_each(|a| {
            let z: f32 = StandardNormal.sample(rng);
            *a += z;
        }),
        UnitKind::Relu => pre.iter_mut().for_each(|a| {
            let z: f32 = StandardNormal.sample(rng);
            *a = (*a + sigmoid(*a).sqrt() * z).max(0.0);
        }),
    }
}

pub(crate) fn activate<R: Rng + ?Sized>(kind: UnitKind, pre: &mut [f32], rng: &mut R, sample: bool) {
    if sample {
        unit_samples(kind, pre, rng);
    } else {
        unit_means(kind, pre);
    }
}

/// Restricted Boltzmann machine with `w` of extents `hidden x visible`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rbm {
    pub w: Tensor,
    pub bv: Tensor,
    pub bh: Tensor,
    pub visible_kind: UnitKind,
    pub hidden_kind: UnitKind,
}

impl Rbm {
    /// Weights from N(0, 0.01²), zero biases.
    pub fn new<R: Rng + ?Sized>(
        visible: usize,
        hidden: usize,
        visible_kind: UnitKind,
        hidden_kind: UnitKind,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0f32, 0.01).expect("valid normal");
        let w: Vec<f32> = (0..visible * hidden).map(|_| normal.sample(rng)).collect();
        Rbm {
            w: Tensor::from_vec(&[hidden, visible], w).expect("rbm extents"),
            bv: Tensor::zeros(&[visible]),
            bh: Tensor::zeros(&[hidden]),
            visible_kind,
            hidden_kind,
        }
    }

    pub fn from_parts(
        w: Tensor,
        bv: Tensor,
        bh: Tensor,
        visible_kind: UnitKind,
        hidden_kind: UnitKind,
    ) -> Result<Self> {
        if w.rank() != 2 || bh.dims() != [w.dims()[0]] || bv.dims() != [w.dims()[1]] {
            return Err(shape_err(format!(
                "rbm weights {:?} with biases {:?} / {:?}",
                w.dims(),
                bv.dims(),
                bh.dims()
            )));
        }
        Ok(Rbm {
            w: w.to_packed(),
            bv: bv.to_packed(),
            bh: bh.to_packed(),
            visible_kind,
            hidden_kind,
        })
    }

    pub fn visible(&self) -> usize {
        self.w.dims()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w.dims()[0]
    }

    fn check_rows(&self, x: &Tensor, width: usize, side: &str) -> Result<usize> {
        if x.rank() < 2 || x.sample_len() != width {
            return Err(shape_err(format!(
                "{side} layer has {width} units, got {:?}",
                x.dims()
            )));
        }
        Ok(x.batch())
    }

    /// `v·wᵀ + bh`, packed `batch x hidden`.
    pub fn hidden_pre(&self, v: &[f32], batch: usize) -> Vec<f32> {
        let (nh, nv) = (self.hidden(), self.visible());
        let mut a = vec![0.0f32; batch * nh];
        sgemm(
            MatRef::new(v, batch, nv),
            MatRef::new(self.w.as_slice(), nh, nv),
            GemmFlags::NT,
            &mut a,
            nh,
            false,
        )
        .expect("rbm extents");
        add_bias(&mut a, self.bh.as_slice());
        a
    }

    /// `h·w + bv`, packed `batch x visible`.
    pub fn visible_pre(&self, h: &[f32], batch: usize) -> Vec<f32> {
        let (nh, nv) = (self.hidden(), self.visible());
        let mut a = vec![0.0f32; batch * nv];
        sgemm(
            MatRef::new(h, batch, nh),
            MatRef::new(self.w.as_slice(), nh, nv),
            GemmFlags::NN,
            &mut a,
            nv,
            false,
        )
        .expect("rbm extents");
        add_bias(&mut a, self.bv.as_slice());
        a
    }

    pub fn hidden_given_visible<R: Rng + ?Sized>(&self, v: &Tensor, rng: &mut R, sample: bool) -> Result<Tensor> {
        let batch = self.check_rows(v, self.visible(), "visible")?;
        let mut a = self.hidden_pre(&v.to_vec(), batch);
        activate(self.hidden_kind, &mut a, rng, sample);
        Tensor::from_vec(&[batch, self.hidden()], a)
    }

    pub fn visible_given_hidden<R: Rng + ?Sized>(&self, h: &Tensor, rng: &mut R, sample: bool) -> Result<Tensor> {
        let batch = self.check_rows(h, self.hidden(), "hidden")?;
        let mut a = self.visible_pre(&h.to_vec(), batch);
        activate(self.visible_kind, &mut a, rng, sample);
        Tensor::from_vec(&[batch, self.visible()], a)
    }

    /// Deterministic hidden means, used to feed the next layer of a stack.
    pub fn hidden_means(&self, v: &Tensor) -> Result<Tensor> {
        let batch = self.check_rows(v, self.visible(), "visible")?;
        let mut a = self.hidden_pre(&v.to_vec(), batch);
        unit_means(self.hidden_kind, &mut a);
        Tensor::from_vec(&[batch, self.hidden()], a)
    }

    /// One contrastive-divergence update with `k` Gibbs steps. Returns the
    /// reconstruction error `‖v0 − v1‖² / batch`, `v1` being the first
    /// visible mean of the chain.
    ///
    /// Statistics use hidden means on both phases; the chain is driven by
    /// sampled hidden states and visible means.
    pub fn cd_k<R: Rng + ?Sized>(&mut self, v0: &Tensor, k: usize, lr: f32, rng: &mut R) -> Result<f32> {
        if k < 1 {
            return Err(Error::InvalidParameter("CD needs at least one Gibbs step".into()));
        }
        let batch = self.check_rows(v0, self.visible(), "visible")?;
        let v0 = v0.to_vec();
        let h0_pre = self.hidden_pre(&v0, batch);
        let mut h0 = h0_pre.clone();
        unit_means(self.hidden_kind, &mut h0);
        let mut h_state = h0_pre;
        unit_samples(self.hidden_kind, &mut h_state, rng);

        let mut recon = 0.0f32;
        let mut vk = Vec::new();
        let mut hk = Vec::new();
        for step in 0..k {
            vk = self.visible_pre(&h_state, batch);
            unit_means(self.visible_kind, &mut vk);
            if step == 0 {
                recon = v0.iter().zip(&vk).map(|(a, b)| (a - b) * (a - b)).sum::<f32>() / batch as f32;
            }
            let hk_pre = self.hidden_pre(&vk, batch);
            hk = hk_pre.clone();
            unit_means(self.hidden_kind, &mut hk);
            if step + 1 < k {
                h_state = hk_pre;
                unit_samples(self.hidden_kind, &mut h_state, rng);
            }
        }

        self.apply_stats(&v0, &h0, &vk, &hk, batch, lr);
        Ok(recon)
    }

    fn apply_stats(&mut self, v0: &[f32], h0: &[f32], vk: &[f32], hk: &[f32], batch: usize, lr: f32) {
        let (nh, nv) = (self.hidden(), self.visible());
        let mut pos = vec![0.0f32; nh * nv];
        let mut neg = vec![0.0f32; nh * nv];
        sgemm(MatRef::new(h0, batch, nh), MatRef::new(v0, batch, nv), GemmFlags::TN, &mut pos, nv, false)
            .expect("rbm extents");
        sgemm(MatRef::new(hk, batch, nh), MatRef::new(vk, batch, nv), GemmFlags::TN, &mut neg, nv, false)
            .expect("rbm extents");
        let scale = lr / batch as f32;
        for ((w, p), n) in self.w.as_mut_slice().iter_mut().zip(&pos).zip(&neg) {
            *w += scale * (p - n);
        }
        bias_step(self.bv.as_mut_slice(), v0, vk, nv, scale);
        bias_step(self.bh.as_mut_slice(), h0, hk, nh, scale);
    }

    /// Mean free energy over the batch; binary units only.
    pub fn free_energy(&self, v: &Tensor) -> Result<f32> {
        let per = self.free_energy_per_sample(v)?;
        Ok((per.iter().map(|&f| f as f64).sum::<f64>() / per.len() as f64) as f32)
    }

    /// `F(v) = −v·bv − Σ_j log(1 + exp(a_j))` for every row of `v`.
    pub fn free_energy_per_sample(&self, v: &Tensor) -> Result<Vec<f32>> {
        if self.visible_kind != UnitKind::Binary || self.hidden_kind != UnitKind::Binary {
            return Err(Error::UnsupportedKind(format!(
                "free energy is defined here for binary units, got {}/{}",
                self.visible_kind.name(),
                self.hidden_kind.name()
            )));
        }
        let batch = self.check_rows(v, self.visible(), "visible")?;
        let vs = v.to_vec();
        let a = self.hidden_pre(&vs, batch);
        let bv = self.bv.as_slice();
        Ok(vs
            .chunks_exact(self.visible())
            .zip(a.chunks_exact(self.hidden()))
            .map(|(vr, ar)| {
                let vb: f64 = vr.iter().zip(bv).map(|(&x, &b)| x as f64 * b as f64).sum();
                let sp: f64 = ar.iter().map(|&x| softplus(x as f64)).sum();
                (-vb - sp) as f32
            })
            .collect())
    }
}

fn add_bias(a: &mut [f32], b: &[f32]) {
    for row in a.chunks_exact_mut(b.len()) {
        for (x, &bb) in row.iter_mut().zip(b) {
            *x += bb;
        }
    }
}

/// `b += scale · Σ_rows (pos − neg)`
pub(crate) fn bias_step(b: &mut [f32], pos: &[f32], neg: &[f32], width: usize, scale: f32) {
    let mut acc = vec![0.0f32; width];
    for (pr, nr) in pos.chunks_exact(width).zip(neg.chunks_exact(width)) {
        for ((a, &p), &n) in acc.iter_mut().zip(pr).zip(nr) {
            *a += p - n;
        }
    }
    for (bb, a) in b.iter_mut().zip(&acc) {
        *bb += scale * a;
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f32 = 1e-5;
pub const DEFAULT_MOMENTUM: f32 = 0.9;

/// Per-feature batch normalization. Inputs of rank > 2 are flattened to
/// `batch x features`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f32,
    pub epsilon: f32,
    pub g_gamma: Tensor,
    pub g_beta: Tensor,
}

/// Saved by a training-mode forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormCache {
    x_hat: Vec<f32>,
    inv_std: Vec<f32>,
    batch: usize,
    dims: Vec<usize>,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            gamma: Tensor::full(&[features], 1.0),
            beta: Tensor::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::full(&[features], 1.0),
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
            g_gamma: Tensor::zeros(&[features]),
            g_beta: Tensor::zeros(&[features]),
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    pub fn zero_grad(&mut self) {
        self.g_gamma.fill(0.0);
        self.g_beta.fill(0.0);
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "batch norm needs epsilon > 0 and momentum in (0, 1), got {} and {}",
                self.epsilon, self.momentum
            )));
        }
        if x.rank() < 2 || x.sample_len() != self.features() {
            return Err(shape_err(format!(
                "batch norm over {} features got {:?}",
                self.features(),
                x.dims()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor, training: bool) -> Result<(Tensor, Option<BatchNormCache>)> {
        self.check(x)?;
        let batch = x.batch();
        let f = self.features();
        let xs = x.to_vec();
        let (gamma, beta) = (self.gamma.as_slice(), self.beta.as_slice());
        let mut y = vec![0.0f32; xs.len()];

        if !training {
            let (rm, rv) = (self.running_mean.as_slice(), self.running_var.as_slice());
            for (yr, xr) in y.chunks_exact_mut(f).zip(xs.chunks_exact(f)) {
                for j in 0..f {
                    yr[j] = gamma[j] * (xr[j] - rm[j]) / (rv[j] + self.epsilon).sqrt() + beta[j];
                }
            }
            return Ok((Tensor::from_vec(x.dims(), y)?, None));
        }

        if batch < 2 {
            return Err(Error::InvalidBatch(format!(
                "batch norm training needs at least 2 samples, got {batch}"
            )));
        }
        let mut mean = vec![0.0f64; f];
        for xr in xs.chunks_exact(f) {
            for (m, &v) in mean.iter_mut().zip(xr) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= batch as f64);
        let mut var = vec![0.0f64; f];
        for xr in xs.chunks_exact(f) {
            for j in 0..f {
                let d = xr[j] as f64 - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= batch as f64);

        let inv_std: Vec<f32> = var
            .iter()
            .map(|&v| (1.0 / (v + self.epsilon as f64).sqrt()) as f32)
            .collect();
        let mut x_hat = vec![0.0f32; xs.len()];
        for ((hr, yr), xr) in x_hat.chunks_exact_mut(f).zip(y.chunks_exact_mut(f)).zip(xs.chunks_exact(f)) {
            for j in 0..f {
                hr[j] = (xr[j] - mean[j] as f32) * inv_std[j];
                yr[j] = gamma[j] * hr[j] + beta[j];
            }
        }

        let m = self.momentum;
        for (r, &b) in self.running_mean.as_mut_slice().iter_mut().zip(&mean) {
            *r = m * *r + (1.0 - m) * b as f32;
        }
        for (r, &b) in self.running_var.as_mut_slice().iter_mut().zip(&var) {
            *r = m * *r + (1.0 - m) * b as f32;
        }

        let cache = BatchNormCache {
            x_hat,
            inv_std,
            batch,
            dims: x.dims().to_vec(),
        };
        Ok((Tensor::from_vec(x.dims(), y)?, Some(cache)))
    }

    /// Accumulates `g_gamma`, `g_beta` and returns `dx`.
    pub fn backward(&mut self, cache: &BatchNormCache, dy: &Tensor) -> Result<Tensor> {
        if dy.dims() != cache.dims.as_slice() {
            return Err(shape_err(format!(
                "batch norm gradient {:?} does not match {:?}",
                dy.dims(),
                cache.dims
            )));
        }
        let f = self.features();
        let n = cache.batch as f32;
        let g = dy.to_vec();
        let mut sum_dy = vec![0.0f32; f];
        let mut sum_dy_xhat = vec![0.0f32; f];
        for (gr, hr) in g.chunks_exact(f).zip(cache.x_hat.chunks_exact(f)) {
            for j in 0..f {
                sum_dy[j] += gr[j];
                sum_dy_xhat[j] += gr[j] * hr[j];
            }
        }
        for (a, s) in self.g_gamma.as_mut_slice().iter_mut().zip(&sum_dy_xhat) {
            *a += s;
        }
        for (a, s) in self.g_beta.as_mut_slice().iter_mut().zip(&sum_dy) {
            *a += s;
        }
        let gamma = self.gamma.as_slice();
        let mut dx = vec![0.0f32; g.len()];
        for ((dr, gr), hr) in dx.chunks_exact_mut(f).zip(g.chunks_exact(f)).zip(cache.x_hat.chunks_exact(f)) {
            for j in 0..f {
                dr[j] = gamma[j] * cache.inv_std[j] / n
                    * (n * gr[j] - sum_dy[j] - hr[j] * sum_dy_xhat[j]);
            }
        }
        Tensor::from_vec(&cache.dims, dx)
    }
}

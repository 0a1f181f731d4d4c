use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    /// Zero each element with probability `p`.
    Masking(f32),
    /// Add N(0, sigma²) to each element.
    Gaussian(f32),
}

/// Corrupted copy of `x` for denoising-autoencoder training.
pub fn denoising_corrupt<R: Rng + ?Sized>(x: &Tensor, noise: Noise, rng: &mut R) -> Result<Tensor> {
    let mut out = x.clone();
    match noise {
        Noise::Masking(p) => {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("masking probability {p} not in [0, 1)")));
            }
            if p > 0.0 {
                for r in 0..out.rows() {
                    for v in out.row_mut(r) {
                        if rng.random::<f32>() < p {
                            *v = 0.0;
                        }
                    }
                }
            }
        }
        Noise::Gaussian(sigma) => {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::InvalidParameter(format!("noise sigma {sigma} must be >= 0")));
            }
            if sigma > 0.0 {
                for r in 0..out.rows() {
                    for v in out.row_mut(r) {
                        let z: f32 = StandardNormal.sample(rng);
                        *v += sigma * z;
                    }
                }
            }
        }
    }
    Ok(out)
}

//! Finite-difference helpers shared by the layer tests.

use rand::Rng;

use crate::tensor::Tensor;

pub fn random_tensor<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> Tensor {
    let len = dims.iter().product();
    Tensor::from_vec(dims, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Central differences of `f` with respect to every element of `at`.
pub fn central_diff(at: &Tensor, h: f32, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = at.clone();
    (0..at.as_slice().len())
        .map(|i| {
            let orig = probe.as_slice()[i];
            probe.as_mut_slice()[i] = orig + h;
            let up = f(&probe);
            probe.as_mut_slice()[i] = orig - h;
            let down = f(&probe);
            probe.as_mut_slice()[i] = orig;
            (up - down) / (2.0 * h as f64)
        })
        .collect()
}

/// max |analytic - numeric| / max |numeric|.
pub fn max_rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a as f64 - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// `sum(y * weights)` in f64: a scalar loss whose gradient w.r.t. `y` is `weights`.
pub fn weighted_sum(y: &Tensor, weights: &Tensor) -> f64 {
    y.logical_iter()
        .zip(weights.logical_iter())
        .map(|(a, b)| a as f64 * b as f64)
        .sum()
}

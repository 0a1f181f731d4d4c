use rand::Rng;

use crate::tensor::Tensor;

/// Uniform in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(
    dims: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let mut t = Tensor::zeros(dims);
    for v in t.as_mut_slice() {
        *v = rng.random_range(-limit..=limit);
    }
    t
}

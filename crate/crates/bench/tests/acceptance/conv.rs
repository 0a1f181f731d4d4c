use std::time::Instant;

use fastnn::conv::{conv_full, conv_valid, ConvBackend, ConvMode, ConvShape};
use fastnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{rel_err, Outcome};

const SHAPES: usize = 240;

fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let len = dims.iter().product();
    Tensor::from_vec(dims, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Six nested loops in f64 over the zero-padded input.
fn naive(x: &Tensor, k: &Tensor, s: &ConvShape, mode: ConvMode) -> Vec<f64> {
    let (oh, ow) = s.out_dims(mode);
    let xs = x.to_vec();
    let ks = k.to_vec();
    let px = |n: usize, c: usize, r: isize, q: isize| -> f64 {
        let (r, q) = (r - s.pad as isize, q - s.pad as isize);
        if r < 0 || q < 0 || r >= s.h as isize || q >= s.w as isize {
            return 0.0;
        }
        xs[((n * s.c_in + c) * s.h + r as usize) * s.w + q as usize] as f64
    };
    let mut out = Vec::with_capacity(s.n * s.k * oh * ow);
    for n in 0..s.n {
        for kk in 0..s.k {
            for i in 0..oh as isize {
                for j in 0..ow as isize {
                    let mut acc = 0.0;
                    for c in 0..s.c_in {
                        for a in 0..s.kh as isize {
                            for b in 0..s.kw as isize {
                                let w = ks[((kk * s.c_in + c) * s.kh + a as usize) * s.kw + b as usize] as f64;
                                acc += w * match mode {
                                    ConvMode::Valid => px(n, c, i + a, j + b),
                                    ConvMode::Full => px(n, c, i - a, j - b),
                                };
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn random_shape(rng: &mut ChaCha8Rng) -> ConvShape {
    let h = rng.random_range(1..=16);
    let w = rng.random_range(1..=16);
    let pad = rng.random_range(0..=2);
    let kh = rng.random_range(1..=(h + 2 * pad).min(16));
    let kw = rng.random_range(1..=(w + 2 * pad).min(16));
    ConvShape::new(
        rng.random_range(1..=4),
        rng.random_range(1..=3),
        rng.random_range(1..=4),
        (kh, kw),
        (h, w),
    )
    .with_pad(pad)
}

pub fn criterion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_valid, mut worst_full) = (0.0f64, 0.0f64);
    let mut failures = Vec::new();
    for _ in 0..SHAPES {
        let s = random_shape(&mut rng);
        let x = random(&mut rng, &s.input_dims());
        let k = random(&mut rng, &s.kernel_dims());
        for mode in [ConvMode::Valid, ConvMode::Full] {
            let want = naive(&x, &k, &s, mode);
            for &b in ConvBackend::for_mode(mode) {
                let got = match mode {
                    ConvMode::Valid => conv_valid(&x, &k, &s, b),
                    ConvMode::Full => conv_full(&x, &k, &s, b),
                };
                let got = match got {
                    Ok(t) => t,
                    Err(e) => {
                        failures.push(format!("{b} on {s:?}: {e}"));
                        continue;
                    }
                };
                let err = rel_err(&got.to_vec(), &want);
                let (worst, tol) = match mode {
                    ConvMode::Valid => (&mut worst_valid, 1e-5),
                    ConvMode::Full => (&mut worst_full, 1e-4),
                };
                *worst = worst.max(err);
                if err >= tol {
                    failures.push(format!("{b} on {s:?}: {err:.2e}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{SHAPES} shapes, worst valid {worst_valid:.2e} (< 1e-5), worst full {worst_full:.2e} (< 1e-4), {secs:.1}s (< 60s){}",
        failures.first().map(|f| format!("; first failure {f}")).unwrap_or_default()
    );
    Outcome::check(failures.is_empty() && secs < 60.0, detail)
}

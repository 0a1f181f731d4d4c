use std::hint::black_box;

use fastnn::optim::{Optimizer, OptimizerConfig, OptimizerKind};
use fastnn::Tensor;

use crate::Outcome;

/// Per-element state of the transcribed recurrences.
#[derive(Clone, Default)]
struct State {
    a: f32,
    b: f32,
    t: i32,
}

/// The update rules written out for one scalar. Constants go through
/// `black_box` so nothing is folded at compile time.
fn oracle_step(c: &OptimizerConfig, s: &mut State, p: f32, g: f32) -> f32 {
    let c = black_box(*c);
    match c.kind {
        OptimizerKind::SgdMomentum => {
            let g = g + c.weight_decay * p;
            s.a = c.momentum * s.a - c.lr * g;
            p + s.a
        }
        OptimizerKind::Adagrad => {
            s.a += g * g;
            p - c.lr * g / (s.a.sqrt() + c.eps)
        }
        OptimizerKind::Adadelta => {
            s.a = c.rho * s.a + (1.0 - c.rho) * g * g;
            let d = -(s.b + c.eps).sqrt() / (s.a + c.eps).sqrt() * g;
            s.b = c.rho * s.b + (1.0 - c.rho) * d * d;
            p + d
        }
        OptimizerKind::Adam => {
            s.t += 1;
            let c1 = 1.0 - c.beta1.powi(s.t);
            let c2 = 1.0 - c.beta2.powi(s.t);
            s.a = c.beta1 * s.a + (1.0 - c.beta1) * g;
            s.b = c.beta2 * s.b + (1.0 - c.beta2) * g * g;
            p - c.lr * (s.a / c1) / ((s.b / c2).sqrt() + c.eps)
        }
    }
}

fn config(kind: OptimizerKind) -> OptimizerConfig {
    match kind {
        OptimizerKind::SgdMomentum => OptimizerConfig::sgd(0.1, 0.9),
        OptimizerKind::Adadelta => OptimizerConfig::new(kind, 1.0),
        _ => OptimizerConfig::new(kind, 0.1),
    }
}

/// Three steps on a 3-vector with gradients of `x^2`; true when the
/// library matches the transcription bit for bit.
fn trace_matches(kind: OptimizerKind) -> bool {
    let c = config(kind);
    let mut opt = Optimizer::new(c).unwrap();
    let mut p = Tensor::from_vec(&[3], vec![1.5, -0.25, 3.0]).unwrap();
    let mut mirror = p.to_vec();
    let mut states = vec![State::default(); 3];
    for _ in 0..3 {
        let g: Vec<f32> = mirror.iter().map(|x| 2.0 * x).collect();
        opt.step(0, &mut p, &Tensor::from_vec(&[3], g.clone()).unwrap()).unwrap();
        for i in 0..3 {
            mirror[i] = oracle_step(&c, &mut states[i], mirror[i], g[i]);
        }
        if p.to_vec() != mirror {
            return false;
        }
    }
    true
}

fn quadratic_decreases(kind: OptimizerKind) -> (f32, f32) {
    let mut opt = Optimizer::new(config(kind)).unwrap();
    let mut x = Tensor::full(&[1], 2.0);
    let f0 = 4.0;
    for _ in 0..100 {
        let g = Tensor::full(&[1], 2.0 * x.to_vec()[0]);
        opt.step(0, &mut x, &g).unwrap();
    }
    let v = x.to_vec()[0];
    (f0, v * v)
}

pub fn criterion() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in OptimizerKind::ALL {
        let exact = trace_matches(kind);
        let (f0, f100) = quadratic_decreases(kind);
        ok &= exact && f100 < f0;
        parts.push(format!(
            "{kind}: trace {} f {f0}->{f100:.3e}",
            if exact { "exact" } else { "MISMATCH" }
        ));
    }
    Outcome::check(ok, parts.join("; "))
}

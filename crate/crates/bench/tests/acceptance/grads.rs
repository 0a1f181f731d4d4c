use std::sync::Arc;
use std::time::Instant;

use fastnn::conv::{ConvBackend, ConvPolicy, ConvShape, Dispatcher};
use fastnn::layers::{Activation, BatchNormState, ConvLayer, DenseLayer, Layer, PoolMode, PoolWindow};
use fastnn::network::{softmax_cross_entropy, Act, LayerSpec, Network, NetworkConfig, NetworkSpec};
use fastnn::optim::OptimizerConfig;
use fastnn::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{rel_err, Outcome};

const H: f32 = 1e-3;
const TOL: f64 = 1e-2;

fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let len = dims.iter().product();
    Tensor::from_vec(dims, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn set_logical(t: &mut Tensor, i: usize, v: f32) {
    let last = t.last_extent();
    t.row_mut(i / last)[i % last] = v;
}

/// Central differences of `f` over every logical element of `at`.
fn numeric(at: &Tensor, mut f: impl FnMut(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = at.clone();
    let base = at.to_vec();
    (0..base.len())
        .map(|i| {
            set_logical(&mut probe, i, base[i] + H);
            let up = f(&probe);
            set_logical(&mut probe, i, base[i] - H);
            let down = f(&probe);
            set_logical(&mut probe, i, base[i]);
            (up - down) / (2.0 * H as f64)
        })
        .collect()
}

fn weighted(y: &Tensor, w: &[f32]) -> f64 {
    y.to_vec().iter().zip(w).map(|(&a, &b)| a as f64 * b as f64).sum()
}

/// Worst relative error over the input gradient and every parameter
/// gradient of `layer` for the loss `sum(w * layer(x))`.
fn check_layer(mut layer: Layer, x: &Tensor, rng: &mut ChaCha8Rng) -> f64 {
    let mut fwd_rng = ChaCha8Rng::seed_from_u64(0);
    let (y, aux) = layer.forward(x, true, &mut fwd_rng).unwrap();
    let w: Vec<f32> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dy = Tensor::from_vec(y.dims(), w.clone()).unwrap();
    layer.zero_grad();
    let dx = layer.backward(x, &y, &aux, &dy).unwrap();

    let probe = layer.clone();
    let loss = |l: &mut Layer, x: &Tensor| weighted(&l.forward(x, true, &mut ChaCha8Rng::seed_from_u64(0)).unwrap().0, &w);
    let mut worst = rel_err(&dx.to_vec(), &numeric(x, |p| loss(&mut probe.clone(), p)));
    for pi in 0..layer.params().len() {
        let analytic = layer.grads()[pi].to_vec();
        let at = layer.params()[pi].clone();
        let num = numeric(&at, |p| {
            let mut l = probe.clone();
            *l.params_and_grads().remove(pi).0 = p.clone();
            loss(&mut l, x)
        });
        worst = worst.max(rel_err(&analytic, &num));
    }
    worst
}

fn fixed_policy(force: &[ConvBackend]) -> ConvPolicy {
    let mut p = ConvPolicy::with_dispatcher(Arc::new(Dispatcher::defaults()));
    for &b in force {
        p = p.forcing(b);
    }
    p
}

fn cross_entropy_check(rng: &mut ChaCha8Rng) -> f64 {
    let x = random(rng, &[4, 5]);
    let mut t = Tensor::zeros(&[4, 5]);
    for r in 0..4 {
        t.set(&[r, rng.random_range(0..5)], 1.0);
    }
    let (_, g) = softmax_cross_entropy(&x, &t).unwrap();
    let num = numeric(&x, |p| softmax_cross_entropy(p, &t).unwrap().0 as f64);
    rel_err(&g.to_vec(), &num)
}

/// 6 -> 4 sigmoid -> 3 softmax with cross-entropy, all parameters.
fn network_check(rng: &mut ChaCha8Rng) -> f64 {
    let mut cfg = NetworkConfig::new(OptimizerConfig::sgd(0.1, 0.0), 5, 3);
    cfg.conv_policy = fixed_policy(&[]);
    let spec = NetworkSpec::new(
        vec![LayerSpec::dense(6, 4, Act::Sigmoid), LayerSpec::dense(4, 3, Act::Softmax)],
        cfg,
    );
    let mut net = Network::build(&spec).unwrap();
    let x = random(rng, &[5, 6]);
    let mut t = Tensor::zeros(&[5, 3]);
    for r in 0..5 {
        t.set(&[r, r % 3], 1.0);
    }
    net.compute_gradients(&x, &t).unwrap();
    let mut worst = 0.0f64;
    for li in 0..net.layers().len() {
        for pi in 0..net.layers()[li].params().len() {
            let analytic = net.layers()[li].grads()[pi].to_vec();
            let at = net.layers()[li].params()[pi].clone();
            let mut probe = net.clone();
            let num = numeric(&at, |p| {
                *probe.layers_mut()[li].params_and_grads().remove(pi).0 = p.clone();
                probe.loss(&x, &t).unwrap() as f64
            });
            worst = worst.max(rel_err(&analytic, &num));
        }
    }
    worst
}

pub fn criterion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut results: Vec<(String, f64)> = Vec::new();

    let dense = DenseLayer::new(7, 5, &mut rng);
    let x = random(&mut rng, &[4, 7]);
    results.push(("dense".into(), check_layer(Layer::Dense(dense), &x, &mut rng)));

    for (tag, force) in [
        ("conv", vec![]),
        ("conv direct", vec![ConvBackend::DirectValid, ConvBackend::PaddedValidFull]),
        ("conv im2col+fft", vec![ConvBackend::Im2colGemm, ConvBackend::FftFull]),
    ] {
        let shape = ConvShape::new(1, 2, 3, (3, 3), (7, 6));
        let conv = ConvLayer::new(shape, &mut rng).unwrap().with_policy(fixed_policy(&force));
        let x = random(&mut rng, &[2, 2, 7, 6]);
        results.push((tag.into(), check_layer(Layer::Conv(conv), &x, &mut rng)));
    }

    for mode in [PoolMode::Max, PoolMode::Avg] {
        let x = random(&mut rng, &[2, 2, 4, 6]);
        let layer = Layer::Pool {
            mode,
            window: PoolWindow { h: 2, w: 2 },
        };
        results.push((format!("{mode:?} pool").to_lowercase(), check_layer(layer, &x, &mut rng)));
    }

    for act in [Activation::Sigmoid, Activation::Relu] {
        let x = random(&mut rng, &[3, 8]);
        results.push((act.name().into(), check_layer(Layer::Activation(act), &x, &mut rng)));
    }

    let x = random(&mut rng, &[3, 6]);
    results.push(("softmax".into(), check_layer(Layer::Softmax, &x, &mut rng)));
    results.push(("softmax+cross-entropy".into(), cross_entropy_check(&mut rng)));

    let mut bn = BatchNormState::new(5);
    bn.gamma = random(&mut rng, &[5]);
    bn.beta = random(&mut rng, &[5]);
    let x = random(&mut rng, &[6, 5]);
    results.push(("batch norm".into(), check_layer(Layer::BatchNorm(bn), &x, &mut rng)));

    results.push(("two-layer network".into(), network_check(&mut rng)));

    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let bad: Vec<String> = results
        .iter()
        .filter(|r| !(r.1 < TOL))
        .map(|r| format!("{} {:.2e}", r.0, r.1))
        .collect();
    let detail = format!(
        "{} checks, worst rel err {worst:.2e} (< 1e-2), {secs:.1}s (< 30s){}",
        results.len(),
        if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
    );
    Outcome::check(bad.is_empty() && secs < 30.0, detail)
}

use std::sync::Arc;

use fastnn::conv::{ConvBackend, Dispatcher};
use fastnn::data::{cifar10_in, data_dir, mnist_in, scale_pre, Dataset, Split};
use fastnn::Tensor;
use fastnn_bench::{builtin_experiment, run_on, DatasetKind, ExperimentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

fn cached(kind: DatasetKind) -> Result<(Dataset, Dataset), String> {
    let root = data_dir();
    let load = |split| match kind {
        DatasetKind::Mnist => mnist_in(&root, split),
        DatasetKind::Cifar10 => cifar10_in(&root, split),
    };
    let scaled = |split| load(split).and_then(|d| scale_pre(d, 255.0)).map_err(|e| e.to_string());
    Ok((scaled(Split::Train)?, scaled(Split::Test)?))
}

fn config(name: &str, subset: usize, epochs: usize) -> ExperimentConfig {
    let mut c = builtin_experiment(name).unwrap();
    c.subset = Some(subset);
    c.epochs = epochs;
    c
}

/// Trains on the cached data and compares final test accuracy to `floor`.
fn smoke(name: &str, kind: DatasetKind, subset: usize, epochs: usize, floor: f64) -> Outcome {
    let (train, test) = match cached(kind) {
        Ok(d) => d,
        Err(e) => return Outcome::Skip(format!("dataset not in cache ({e})")),
    };
    let c = config(name, subset, epochs);
    let out = match run_on(&c, &train, &test, Arc::new(Dispatcher::defaults())) {
        Ok(o) => o,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let acc = out.report.test_accuracy.unwrap_or(0.0) as f64;
    Outcome::check(
        acc >= floor,
        format!("{subset} samples, {epochs} epochs, test accuracy {acc:.4} (>= {floor})"),
    )
}

pub fn mnist_dense() -> Outcome {
    smoke("mnist_dense", DatasetKind::Mnist, 5000, 5, 0.90)
}

pub fn cifar_cnn() -> Outcome {
    smoke("cifar_cnn", DatasetKind::Cifar10, 5000, 5, 0.30)
}

fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = Tensor::from_vec(&[n, 1, 28, 28], (0..n * 784).map(|_| rng.random()).collect()).unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..10)).collect();
    Dataset::new(images, labels, 10, "synthetic", Split::Train).unwrap()
}

/// Final training loss with the valid convolutions forced to `backend`.
fn final_loss(c: &ExperimentConfig, train: &Dataset, test: &Dataset, backend: ConvBackend) -> Result<f64, String> {
    let mut c = c.clone();
    c.forced_backend = Some(backend);
    let out = run_on(&c, train, test, Arc::new(Dispatcher::defaults())).map_err(|e| e.to_string())?;
    out.report.final_loss().map(f64::from).ok_or_else(|| "no epochs".to_string())
}

pub fn mnist_cnn() -> Outcome {
    let data = cached(DatasetKind::Mnist);
    let (train, test, source) = match &data {
        Ok((tr, te)) => (tr.subset(500).unwrap(), te.subset(200).unwrap(), "MNIST"),
        Err(_) => (synthetic(500, 1), synthetic(200, 2), "synthetic"),
    };
    let c = config("mnist_cnn", 500, 1);
    let (a, b) = match (
        final_loss(&c, &train, &test, ConvBackend::Im2colGemm),
        final_loss(&c, &train, &test, ConvBackend::DirectValid),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(e),
    };
    let rel = (a - b).abs() / b.abs().max(1e-30);
    let equiv = format!("im2col vs direct final loss {a:.6} / {b:.6}, rel {rel:.2e} (< 1e-4, {source})");
    if rel >= 1e-4 {
        return Outcome::Fail(equiv);
    }
    match smoke("mnist_cnn", DatasetKind::Mnist, 2000, 3, 0.85) {
        Outcome::Pass(d) => Outcome::Pass(format!("{d}; {equiv}")),
        Outcome::Fail(d) => Outcome::Fail(format!("{d}; {equiv}")),
        Outcome::Skip(d) => Outcome::Skip(format!("accuracy: {d}; {equiv}")),
    }
}

use std::sync::Arc;

use fastnn::conv::Dispatcher;
use fastnn::data::{cifar, idx, load_cifar10, load_mnist_idx};
use fastnn::network::{checkpoint, Network, NetworkConfig, NetworkSpec};
use fastnn::optim::OptimizerConfig;
use fastnn::Tensor;
use fastnn_bench::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Outcome;

fn bytes_image(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
    let len = dims.iter().product();
    Tensor::from_vec(dims, (0..len).map(|_| rng.random_range(0..=255u8) as f32).collect()).unwrap()
}

/// Proper prefixes (about 500 of them, always including the last) and
/// single-byte magic corruptions must all fail.
fn rejects_damage(bytes: &[u8], magic_len: usize, parse: impl Fn(&[u8]) -> bool) -> bool {
    let step = (bytes.len() / 500).max(1);
    let mut cuts: Vec<usize> = (0..bytes.len()).step_by(step).collect();
    cuts.push(bytes.len() - 1);
    let prefixes = cuts.into_iter().all(|n| !parse(&bytes[..n]));
    let magic = (0..magic_len).all(|i| {
        let mut b = bytes.to_vec();
        b[i] ^= 0x5a;
        !parse(&b)
    });
    prefixes && magic
}

fn idx_ok(dir: &std::path::Path, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let images = bytes_image(rng, &[7, 1, 5, 4]);
    let labels: Vec<u8> = (0..7).map(|_| rng.random_range(0..10)).collect();
    let ib = idx::write_images(&images).map_err(|e| e.to_string())?;
    let lb = idx::write_labels(&labels);
    std::fs::write(dir.join("i"), &ib).unwrap();
    std::fs::write(dir.join("l"), &lb).unwrap();
    let ds = load_mnist_idx(&dir.join("i"), &dir.join("l")).map_err(|e| e.to_string())?;
    if idx::write_images(&ds.images).map_err(|e| e.to_string())? != ib || idx::write_labels(&ds.labels) != lb {
        return Err("IDX round trip is not bit exact".into());
    }
    if !rejects_damage(&ib, 4, |b| idx::parse_images(b).is_ok()) {
        return Err("damaged IDX images accepted".into());
    }
    if !rejects_damage(&lb, 4, |b| idx::parse_labels(b).is_ok()) {
        return Err("damaged IDX labels accepted".into());
    }
    Ok(())
}

fn cifar_ok(dir: &std::path::Path, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let images = bytes_image(rng, &[3, 3, 32, 32]);
    let labels = vec![0u8, 9, 4];
    let bytes = cifar::write_batch(&images, &labels).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("b.bin"), &bytes).unwrap();
    let ds = load_cifar10(&[dir.join("b.bin")]).map_err(|e| e.to_string())?;
    if cifar::write_batch(&ds.images, &ds.labels).map_err(|e| e.to_string())? != bytes {
        return Err("CIFAR round trip is not bit exact".into());
    }
    // The label byte is the only header CIFAR has.
    let mut bad = bytes.clone();
    bad[0] = 200;
    let truncated = (0..bytes.len()).filter(|n| n % cifar::RECORD != 0 || *n == 0);
    if cifar::parse_batch(&bad).is_ok() || truncated.into_iter().any(|n| cifar::parse_batch(&bytes[..n]).is_ok()) {
        return Err("damaged CIFAR batch accepted".into());
    }
    Ok(())
}

fn checkpoint_ok(dir: &std::path::Path, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let mut config = NetworkConfig::new(OptimizerConfig::sgd(0.1, 0.9), 10, 4);
    config.conv_policy = fastnn::conv::ConvPolicy::with_dispatcher(Arc::new(Dispatcher::defaults()));
    let mut net = Network::build(&NetworkSpec::new(Model::MnistCnn.layers(), config.clone())).map_err(|e| e.to_string())?;
    let x = Tensor::from_vec(&[20, 1, 28, 28], (0..20 * 784).map(|_| rng.random()).collect()).unwrap();
    let labels: Vec<u8> = (0..20).map(|i| i % 10).collect();
    net.fit(&x, &labels, 1).map_err(|e| e.to_string())?;
    let path = dir.join("net.fnn");
    net.save(&path).map_err(|e| e.to_string())?;
    let back = Network::load(&path, config).map_err(|e| e.to_string())?;
    let (a, b) = (net.forward_batch(&x).unwrap().to_vec(), back.forward_batch(&x).unwrap().to_vec());
    if a.iter().map(|v| v.to_bits()).ne(b.iter().map(|v| v.to_bits())) {
        return Err("reloaded network gives different outputs".into());
    }
    let bytes = std::fs::read(&path).unwrap();
    if !rejects_damage(&bytes, 4, |b| checkpoint::decode(b).is_ok()) {
        return Err("damaged checkpoint accepted".into());
    }
    Ok(())
}

pub fn criterion() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let checks = [
        ("IDX", idx_ok(dir.path(), &mut rng)),
        ("CIFAR", cifar_ok(dir.path(), &mut rng)),
        ("checkpoint", checkpoint_ok(dir.path(), &mut rng)),
    ];
    let failures: Vec<String> = checks
        .iter()
        .filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}")))
        .collect();
    if failures.is_empty() {
        Outcome::Pass("IDX, CIFAR and checkpoint round trips bit exact; truncations and bad magic rejected".into())
    } else {
        Outcome::Fail(failures.join("; "))
    }
}

//! Replays the checked-in fuzz seeds, plus truncated and bit-flipped
//! variants of each, through the same properties the fuzz targets assert.

use std::path::PathBuf;

use fastnn::conv::Dispatcher;
use fastnn::data::{cifar, idx};
use fastnn::network::checkpoint;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<Vec<u8>> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read(e.unwrap().path()).unwrap())
        .collect();
    assert!(!out.is_empty(), "no seeds for {target}");
    out.sort();
    out
}

fn variants(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut v = vec![seed.to_vec()];
    let step = (seed.len() / 64).max(1);
    for n in (0..seed.len()).step_by(step) {
        v.push(seed[..n].to_vec());
        let mut flipped = seed.to_vec();
        flipped[n] ^= 0x80;
        v.push(flipped);
    }
    v
}

fn replay(target: &str, check: impl Fn(&[u8])) {
    for seed in seeds(target) {
        check(&seed);
        for v in variants(&seed) {
            check(&v);
        }
    }
}

#[test]
fn idx_images_seeds() {
    replay("idx_images", |data| {
        if let Ok(images) = idx::parse_images(data) {
            assert_eq!(idx::write_images(&images).unwrap(), data);
        }
    });
    for seed in seeds("idx_images") {
        assert!(idx::parse_images(&seed).is_ok());
    }
}

#[test]
fn idx_labels_seeds() {
    replay("idx_labels", |data| {
        if let Ok(labels) = idx::parse_labels(data) {
            assert_eq!(idx::write_labels(&labels), data);
        }
    });
    for seed in seeds("idx_labels") {
        assert!(idx::parse_labels(&seed).is_ok());
    }
}

#[test]
fn cifar10_seeds() {
    replay("cifar10", |data| {
        if let Ok((images, labels)) = cifar::parse_batch(data) {
            assert_eq!(cifar::write_batch(&images, &labels).unwrap(), data);
        }
    });
    for seed in seeds("cifar10") {
        assert!(cifar::parse_batch(&seed).is_ok());
    }
}

#[test]
fn checkpoint_seeds() {
    replay("checkpoint", |data| {
        if let Ok(layers) = checkpoint::decode(data) {
            let once = checkpoint::encode(&layers);
            assert_eq!(checkpoint::encode(&checkpoint::decode(&once).unwrap()), once);
        }
    });
    for seed in seeds("checkpoint") {
        assert_eq!(checkpoint::encode(&checkpoint::decode(&seed).unwrap()), seed);
    }
}

#[test]
fn calibration_table_seeds() {
    replay("calibration_table", |data| {
        let Ok(text) = std::str::from_utf8(data) else { return };
        if let Ok(d) = Dispatcher::parse(text) {
            let table = d.to_table();
            assert_eq!(Dispatcher::parse(&table).unwrap().to_table(), table);
        }
    });
    for seed in seeds("calibration_table") {
        assert!(Dispatcher::parse(std::str::from_utf8(&seed).unwrap()).is_ok());
    }
}

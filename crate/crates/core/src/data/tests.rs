use std::collections::BTreeSet;
use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;

use super::*;

fn idx_pair(images: &[u8], n: usize, h: usize, w: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = vec![0, 0, 8, 3];
    for e in [n, h, w] {
        img.extend_from_slice(&(e as u32).to_be_bytes());
    }
    img.extend_from_slice(images);
    let mut lab = vec![0, 0, 8, 1];
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    (img, lab)
}

fn toy(n: usize, classes: usize) -> Dataset {
    let images = Tensor::from_vec(&[n, 1, 2, 2], (0..n * 4).map(|v| (v % 256) as f32).collect()).unwrap();
    let labels = (0..n).map(|i| (i % classes) as u8).collect();
    Dataset::new(images, labels, classes, "toy", Split::Train).unwrap()
}

#[test]
fn parses_single_idx_image_exactly() {
    let (img, lab) = idx_pair(&[0, 128, 255, 64], 1, 2, 2, &[3]);
    let x = idx::parse_images(&img).unwrap();
    assert_eq!(x.dims(), &[1, 1, 2, 2]);
    assert_eq!(x.to_vec(), vec![0.0, 128.0, 255.0, 64.0]);
    assert_eq!(idx::parse_labels(&lab).unwrap(), vec![3]);
}

#[test]
fn idx_rejects_wrong_magic() {
    let (img, lab) = idx_pair(&[1, 2, 3, 4], 1, 2, 2, &[3]);
    assert!(matches!(idx::parse_labels(&img), Err(Error::Format(_))));
    assert!(matches!(idx::parse_images(&lab), Err(Error::Format(_))));
}

#[test]
fn idx_rejects_truncation() {
    let (img, lab) = idx_pair(&[1, 2, 3, 4], 1, 2, 2, &[3]);
    for cut in [2, 10, img.len() - 1] {
        assert!(matches!(idx::parse_images(&img[..cut]), Err(Error::Length(_))), "{cut}");
    }
    assert!(matches!(idx::parse_labels(&lab[..8]), Err(Error::Length(_))));
}

#[test]
fn idx_huge_header_does_not_allocate() {
    let mut img = vec![0, 0, 8, 3];
    for _ in 0..3 {
        img.extend_from_slice(&u32::MAX.to_be_bytes());
    }
    assert!(idx::parse_images(&img).is_err());
}

#[test]
fn count_mismatch_is_consistency_error() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = idx_pair(&[0; 8], 2, 2, 2, &[1]);
    let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
    fs::write(&ip, img).unwrap();
    fs::write(&lp, lab).unwrap();
    assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::Consistency(_))));
}

#[test]
fn idx_round_trip_through_files_and_gzip() {
    let ds = toy(5, 3);
    let dir = tempfile::tempdir().unwrap();
    let img = idx::write_images(&ds.images).unwrap();
    let lab = idx::write_labels(&ds.labels);
    let ip = dir.path().join("img.gz");
    let mut gz = GzEncoder::new(Vec::new(), Compression::fast());
    gz.write_all(&img).unwrap();
    fs::write(&ip, gz.finish().unwrap()).unwrap();
    let lp = dir.path().join("lab");
    fs::write(&lp, &lab).unwrap();
    let back = load_mnist_idx(&ip, &lp).unwrap();
    assert_eq!(back.images, ds.images);
    assert_eq!(back.labels, ds.labels);
}

#[test]
fn idx_writer_refuses_fractional_pixels() {
    let t = Tensor::from_vec(&[1, 1, 1, 2], vec![0.5, 1.0]).unwrap();
    assert!(idx::write_images(&t).is_err());
}

#[test]
fn cifar_single_record() {
    let mut rec = vec![7u8];
    rec.extend(std::iter::repeat_n(255u8, cifar::PIXELS));
    let (x, y) = cifar::parse_batch(&rec).unwrap();
    assert_eq!(y, vec![7]);
    assert_eq!(x.dims(), &[1, 3, 32, 32]);
    assert!(x.logical_iter().all(|v| v == 255.0));
    assert!(matches!(cifar::parse_batch(&rec[..rec.len() - 1]), Err(Error::Format(_))));
    assert!(matches!(cifar::parse_batch(&[]), Err(Error::Format(_))));
}

#[test]
fn cifar_planes_are_channel_major() {
    let mut rec = vec![1u8];
    rec.extend(std::iter::repeat_n(10u8, 1024));
    rec.extend(std::iter::repeat_n(20u8, 1024));
    rec.extend(std::iter::repeat_n(30u8, 1024));
    let (x, _) = cifar::parse_batch(&rec).unwrap();
    assert_eq!(x.get(&[0, 0, 31, 31]), 10.0);
    assert_eq!(x.get(&[0, 1, 0, 0]), 20.0);
    assert_eq!(x.get(&[0, 2, 5, 7]), 30.0);
}

#[test]
fn cifar_round_trip_over_files() {
    let n = 3;
    let pixels = (0..n * cifar::PIXELS).map(|i| ((i * 7) % 256) as f32).collect();
    let x = Tensor::from_vec(&[n, 3, 32, 32], pixels).unwrap();
    let labels = vec![9, 0, 4];
    let bytes = cifar::write_batch(&x, &labels).unwrap();
    assert_eq!(bytes.len(), n * cifar::RECORD);
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    fs::write(&a, &bytes).unwrap();
    fs::write(&b, &bytes).unwrap();
    let ds = load_cifar10(&[a, b]).unwrap();
    assert_eq!(ds.len(), 6);
    assert_eq!(ds.images.slice_batch(3, 6).unwrap().to_tensor(), x);
    assert_eq!(ds.labels, vec![9, 0, 4, 9, 0, 4]);
}

#[test]
fn scale_examples() {
    let ds = toy(4, 2);
    let once = scale_pre(ds.clone(), 255.0).unwrap();
    assert_eq!(once.images.get(&[0, 0, 0, 1]), 1.0 / 255.0);
    assert_eq!(scale_pre(ds.clone(), 1.0).unwrap(), ds);
    let twice = scale_pre(once, 255.0).unwrap();
    let squared = scale_pre(ds.clone(), 255.0 * 255.0).unwrap();
    for (a, b) in twice.images.logical_iter().zip(squared.images.logical_iter()) {
        assert!((a - b).abs() <= 1e-7);
    }
    assert!(scale_pre(ds.clone(), 0.0).is_err());
    assert!(scale_pre(ds, -2.0).is_err());
}

#[test]
fn scaled_bytes_lie_in_unit_interval() {
    let pixels = (0..=255).map(|v| v as f32).collect();
    let images = Tensor::from_vec(&[1, 1, 16, 16], pixels).unwrap();
    let ds = Dataset::new(images, vec![0], 10, "bytes", Split::Test).unwrap();
    let s = scale_pre(ds, 255.0).unwrap();
    assert!(s.images.logical_iter().all(|v| (0.0..=1.0).contains(&v)));
}

#[test]
fn batches_of_250() {
    let ds = toy(250, 10);
    let sizes: Vec<usize> = batch_iterator(&ds, 100, 1).unwrap().map(|b| b.indices.len()).collect();
    assert_eq!(sizes, vec![100, 100, 50]);
    assert_eq!(batch_iterator(&ds, 100, 1).unwrap().len(), 3);
}

#[test]
fn batches_cover_every_index_once() {
    let ds = toy(97, 10);
    let all: Vec<usize> = batch_iterator(&ds, 10, 3).unwrap().flat_map(|b| b.indices).collect();
    assert_eq!(all.len(), 97);
    assert_eq!(all.iter().copied().collect::<BTreeSet<_>>(), (0..97).collect());
}

#[test]
fn batches_are_seeded() {
    let ds = toy(50, 10);
    let order = |seed| -> Vec<usize> { batch_iterator(&ds, 7, seed).unwrap().flat_map(|b| b.indices).collect() };
    assert_eq!(order(5), order(5));
    assert_ne!(order(5), order(6));
}

#[test]
fn batches_carry_matching_one_hot_rows() {
    let ds = toy(12, 4);
    for b in batch_iterator(&ds, 5, 0).unwrap() {
        assert_eq!(b.y.dims(), &[b.indices.len(), 4]);
        for (r, &i) in b.indices.iter().enumerate() {
            let row = b.y.row(r);
            assert_eq!(row.iter().sum::<f32>(), 1.0);
            assert_eq!(row[ds.labels[i] as usize], 1.0);
            assert_eq!(b.x.slice_batch(r, r + 1).unwrap().to_tensor().to_vec(), ds.images.gather_batch(&[i]).to_vec());
        }
    }
    assert!(batch_iterator(&ds, 0, 0).is_err());
}

#[test]
fn dataset_invariants() {
    let images = Tensor::zeros(&[2, 1, 2, 2]);
    assert!(matches!(
        Dataset::new(images.clone(), vec![0], 10, "x", Split::Train),
        Err(Error::Consistency(_))
    ));
    assert!(matches!(
        Dataset::new(images, vec![0, 10], 10, "x", Split::Train),
        Err(Error::InvalidLabel(_))
    ));
    let ds = toy(10, 2);
    assert_eq!(ds.subset(4).unwrap().len(), 4);
    assert_eq!(ds.subset(100).unwrap().len(), 10);
    assert_eq!(ds.image_dims(), &[1, 2, 2]);
}

#[test]
fn cache_lookup_reports_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    match mnist_in(dir.path(), Split::Train) {
        Err(Error::DataMissing { hint, .. }) => assert!(hint.contains(DATA_DIR_ENV)),
        other => panic!("{other:?}"),
    }
    assert!(matches!(cifar10_in(dir.path(), Split::Test), Err(Error::DataMissing { .. })));
}

#[test]
fn cache_lookup_finds_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = mnist_dir(dir.path());
    fs::create_dir_all(&m).unwrap();
    let (img, lab) = idx_pair(&[1, 2, 3, 4, 5, 6, 7, 8], 2, 2, 2, &[4, 5]);
    fs::write(m.join("t10k-images-idx3-ubyte"), img).unwrap();
    fs::write(m.join("t10k-labels-idx1-ubyte"), lab).unwrap();
    let ds = mnist_in(dir.path(), Split::Test).unwrap();
    assert_eq!(ds.split, Split::Test);
    assert_eq!(ds.labels, vec![4, 5]);

    let c = cifar10_dir(dir.path());
    fs::create_dir_all(&c).unwrap();
    let mut rec = vec![2u8];
    rec.extend(std::iter::repeat_n(1u8, cifar::PIXELS));
    fs::write(c.join("test_batch.bin"), &rec).unwrap();
    assert_eq!(cifar10_in(dir.path(), Split::Test).unwrap().labels, vec![2]);
}

//! Dataset ingestion: MNIST IDX files, CIFAR-10 binary batches, scaling,
//! shuffled mini-batches and the on-disk cache.

pub mod cifar;
#[cfg(feature = "download")]
pub mod download;
pub mod idx;

use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crate::config::{data_dir, DATA_DIR_ENV};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// A labelled image set held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `n x c x h x w`
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub classes: usize,
    pub name: String,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor, labels: Vec<u8>, classes: usize, name: &str, split: Split) -> Result<Self> {
        let ds = Dataset {
            images,
            labels,
            classes,
            name: name.to_string(),
            split,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.rank() != 4 {
            return Err(Error::InvalidShape(format!(
                "images must be n x c x h x w, got {:?}",
                self.images.dims()
            )));
        }
        if self.images.batch() != self.labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                self.images.batch(),
                self.labels.len()
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.classes) {
            return Err(Error::InvalidLabel(format!("label {l} with {} classes", self.classes)));
        }
        if self.images.logical_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite pixel".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `c x h x w` of one image.
    pub fn image_dims(&self) -> &[usize] {
        &self.images.dims()[1..]
    }

    /// The first `n` samples (all of them when `n` is larger).
    pub fn subset(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        if n == 0 {
            return Err(Error::InvalidParameter("empty subset".into()));
        }
        Ok(Dataset {
            images: self.images.slice_batch(0, n)?.to_tensor(),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            name: self.name.clone(),
            split: self.split,
        })
    }
}

/// Reads a file, inflating it when it carries a gzip header.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Loads a pair of IDX files (plain or gzip) as 1-channel images with raw
/// values in `[0, 255]`.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = idx::parse_images(&read_maybe_gz(images)?)?;
    let y = idx::parse_labels(&read_maybe_gz(labels)?)?;
    if x.batch() != y.len() {
        return Err(Error::Consistency(format!(
            "{} images but {} labels",
            x.batch(),
            y.len()
        )));
    }
    if let Some(&l) = y.iter().find(|&&l| l >= 10) {
        return Err(Error::Format(format!("MNIST label {l}")));
    }
    Ok(Dataset {
        images: x,
        labels: y,
        classes: 10,
        name: "mnist".into(),
        split: Split::Train,
    })
}

/// Concatenates CIFAR-10 batch files in order.
pub fn load_cifar10(files: &[PathBuf]) -> Result<Dataset> {
    if files.is_empty() {
        return Err(Error::InvalidParameter("no CIFAR-10 batch files given".into()));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let (x, y) = cifar::parse_batch(&read_maybe_gz(f)?)?;
        pixels.extend(x.into_vec());
        labels.extend(y);
    }
    let images = Tensor::from_vec(&[labels.len(), 3, cifar::SIDE, cifar::SIDE], pixels)?;
    Ok(Dataset {
        images,
        labels,
        classes: cifar::CLASSES as usize,
        name: "cifar10".into(),
        split: Split::Train,
    })
}

/// Divides every pixel by `divisor`.
pub fn scale_pre(mut ds: Dataset, divisor: f32) -> Result<Dataset> {
    if !(divisor > 0.0 && divisor.is_finite()) {
        return Err(Error::InvalidParameter(format!("scale divisor {divisor}")));
    }
    ds.images.map_inplace(|v| v / divisor);
    Ok(ds)
}

/// One mini-batch: inputs, one-hot targets and the sample indices used.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Tensor,
    pub y: Tensor,
    pub indices: Vec<usize>,
}

/// Shuffled, contiguous mini-batches over a dataset.
pub struct BatchIter<'a> {
    ds: &'a Dataset,
    order: Vec<usize>,
    batch: usize,
    pos: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let classes = self.ds.classes;
        let mut y = Tensor::zeros(&[indices.len(), classes]);
        for (r, &i) in indices.iter().enumerate() {
            y.row_mut(r)[self.ds.labels[i] as usize] = 1.0;
        }
        Some(Batch {
            x: self.ds.images.gather_batch(&indices),
            y,
            indices,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

pub fn batch_iterator(ds: &Dataset, batch_size: usize, seed: u64) -> Result<BatchIter<'_>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(BatchIter {
        ds,
        order,
        batch: batch_size,
        pos: 0,
    })
}

const MNIST_FILES: [(&str, &str); 2] = [
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

fn missing(what: String, dir: &Path) -> Error {
    let fetch = if cfg!(feature = "download") {
        "call fastnn::data::download to fetch it"
    } else {
        "rebuild with the `download` feature to fetch it"
    };
    Error::DataMissing {
        what,
        hint: format!(
            "place the files under {} (set {DATA_DIR_ENV} to use another directory) or {fetch}",
            dir.display()
        ),
    }
}

/// Finds `name` or `name.gz` in `dir`.
fn find(dir: &Path, name: &str) -> Option<PathBuf> {
    [dir.join(name), dir.join(format!("{name}.gz"))]
        .into_iter()
        .find(|p| p.is_file())
}

pub fn mnist_dir(root: &Path) -> PathBuf {
    root.join("mnist")
}

pub fn cifar10_dir(root: &Path) -> PathBuf {
    root.join("cifar-10-batches-bin")
}

/// MNIST from the cache rooted at `root`.
pub fn mnist_in(root: &Path, split: Split) -> Result<Dataset> {
    let dir = mnist_dir(root);
    let (img, lab) = MNIST_FILES[(split == Split::Test) as usize];
    let (Some(ip), Some(lp)) = (find(&dir, img), find(&dir, lab)) else {
        return Err(missing(format!("MNIST {split} set ({img}, {lab})"), &dir));
    };
    let mut ds = load_mnist_idx(&ip, &lp)?;
    ds.split = split;
    Ok(ds)
}

/// CIFAR-10 from the cache rooted at `root`.
pub fn cifar10_in(root: &Path, split: Split) -> Result<Dataset> {
    let dir = cifar10_dir(root);
    let names: Vec<String> = match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".into()],
    };
    let files: Vec<PathBuf> = names.iter().map(|n| dir.join(n)).collect();
    if let Some(absent) = files.iter().find(|p| !p.is_file()) {
        return Err(missing(format!("CIFAR-10 {split} set ({})", absent.display()), &dir));
    }
    let mut ds = load_cifar10(&files)?;
    ds.split = split;
    Ok(ds)
}

pub fn mnist(split: Split) -> Result<Dataset> {
    mnist_in(&data_dir(), split)
}

pub fn cifar10(split: Split) -> Result<Dataset> {
    cifar10_in(&data_dir(), split)
}

#[cfg(test)]
mod tests;

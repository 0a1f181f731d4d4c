//! Fetches the canonical archives into the cache, verifying MD5 sums
//! before anything is written.

use std::fs;
use std::path::Path;

use md5::{Digest, Md5};

use super::{cifar10_dir, mnist_dir};
use crate::error::{Error, Result};

const MNIST_BASE: &str = "https://ossci-datasets.s3.amazonaws.com/mnist/";
const MNIST: [(&str, &str); 4] = [
    ("train-images-idx3-ubyte.gz", "f68b3c2dcbeaaa9fbdd348bbdeb94873"),
    ("train-labels-idx1-ubyte.gz", "d53e105ee54ea40749a09fcbcd1e9432"),
    ("t10k-images-idx3-ubyte.gz", "9fb629c4189551a2d022fa330f9573f3"),
    ("t10k-labels-idx1-ubyte.gz", "ec29112dd5afa0611ce80d1b7f02629c"),
];
const CIFAR_URL: &str = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz";
const CIFAR_MD5: &str = "c32a1d4ab5d03f1284b67883e8d87530";

const MAX_DOWNLOAD: u64 = 512 << 20;

fn fetch(url: &str) -> Result<Vec<u8>> {
    let mut resp = ureq::get(url)
        .call()
        .map_err(|e| Error::Io(std::io::Error::other(format!("{url}: {e}"))))?;
    resp.body_mut()
        .with_config()
        .limit(MAX_DOWNLOAD)
        .read_to_vec()
        .map_err(|e| Error::Io(std::io::Error::other(format!("{url}: {e}"))))
}

pub fn md5_hex(bytes: &[u8]) -> String {
    Md5::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn verified(url: &str, want: &str) -> Result<Vec<u8>> {
    let body = fetch(url)?;
    let got = md5_hex(&body);
    if got != want {
        return Err(Error::Format(format!("{url}: md5 {got}, expected {want}")));
    }
    Ok(body)
}

/// Downloads the four MNIST files into `root/mnist`, skipping those
/// already present with the right checksum.
pub fn fetch_mnist(root: &Path) -> Result<()> {
    let dir = mnist_dir(root);
    fs::create_dir_all(&dir)?;
    for (name, sum) in MNIST {
        let path = dir.join(name);
        if fs::read(&path).map(|b| md5_hex(&b) == sum).unwrap_or(false) {
            continue;
        }
        fs::write(&path, verified(&format!("{MNIST_BASE}{name}"), sum)?)?;
    }
    Ok(())
}

/// Downloads and unpacks the CIFAR-10 binary archive into `root`.
pub fn fetch_cifar10(root: &Path) -> Result<()> {
    if cifar10_dir(root).join("test_batch.bin").is_file() {
        return Ok(());
    }
    let body = verified(CIFAR_URL, CIFAR_MD5)?;
    fs::create_dir_all(root)?;
    tar::Archive::new(flate2::read::GzDecoder::new(body.as_slice())).unpack(root)?;
    Ok(())
}

//! CIFAR-10 binary batches: records of one label byte followed by the
//! 32x32 red, green and blue planes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SIDE: usize = 32;
pub const PIXELS: usize = 3 * SIDE * SIDE;
pub const RECORD: usize = 1 + PIXELS;
pub const CLASSES: u8 = 10;

/// Parses one batch file into `n x 3 x 32 x 32` pixel values and labels.
pub fn parse_batch(bytes: &[u8]) -> Result<(Tensor, Vec<u8>)> {
    if bytes.is_empty() || bytes.len() % RECORD != 0 {
        return Err(Error::Format(format!(
            "{} bytes is not a whole number of {RECORD}-byte records",
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * PIXELS);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        if rec[0] >= CLASSES {
            return Err(Error::Format(format!("record {i} has label {}", rec[0])));
        }
        labels.push(rec[0]);
        pixels.extend(rec[1..].iter().map(|&b| b as f32));
    }
    Ok((Tensor::from_vec(&[n, 3, SIDE, SIDE], pixels)?, labels))
}

/// Inverse of [`parse_batch`]; pixels must be integers in `0..=255`.
pub fn write_batch(images: &Tensor, labels: &[u8]) -> Result<Vec<u8>> {
    if images.dims() != [labels.len(), 3, SIDE, SIDE] {
        return Err(Error::InvalidShape(format!(
            "{:?} with {} labels is not a CIFAR-10 batch",
            images.dims(),
            labels.len()
        )));
    }
    let packed = images.to_packed();
    let mut out = Vec::with_capacity(labels.len() * RECORD);
    for (&l, px) in labels.iter().zip(packed.as_slice().chunks_exact(PIXELS)) {
        if l >= CLASSES {
            return Err(Error::InvalidLabel(format!("label {l}")));
        }
        out.push(l);
        for &v in px {
            if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                return Err(Error::InvalidData(format!("{v} is not a byte-valued pixel")));
            }
            out.push(v as u8);
        }
    }
    Ok(out)
}

//! IDX files as distributed for MNIST: a big-endian magic (two zero
//! bytes, a type code, the rank), big-endian u32 extents, then raw bytes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("IDX header ends before {what}")))
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = be_u32(bytes, 0, "the magic number")?;
    if magic != want {
        return Err(Error::Format(format!(
            "IDX magic {magic:#010x}, expected {want:#010x}"
        )));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], header: usize, len: usize) -> Result<&'a [u8]> {
    let body = &bytes[header..];
    if body.len() < len {
        return Err(Error::Length(format!(
            "IDX payload has {} bytes, header promises {len}",
            body.len()
        )));
    }
    if body.len() > len {
        return Err(Error::Length(format!(
            "{} bytes after the IDX payload",
            body.len() - len
        )));
    }
    Ok(body)
}

/// Parses an unsigned-byte rank-3 IDX file into an `n x 1 x rows x cols`
/// tensor of raw pixel values.
pub fn parse_images(bytes: &[u8]) -> Result<Tensor> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let n = be_u32(bytes, 4, "the image count")? as usize;
    let h = be_u32(bytes, 8, "the row count")? as usize;
    let w = be_u32(bytes, 12, "the column count")? as usize;
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Format(format!("empty IDX image set {n}x{h}x{w}")));
    }
    let len = n
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .ok_or_else(|| Error::Length("IDX extents overflow".into()))?;
    let body = payload(bytes, 16, len)?;
    Tensor::from_vec(&[n, 1, h, w], body.iter().map(|&b| b as f32).collect())
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABELS_MAGIC)?;
    let n = be_u32(bytes, 4, "the label count")? as usize;
    Ok(payload(bytes, 8, n)?.to_vec())
}

fn pixel_byte(v: f32) -> Result<u8> {
    if v.fract() == 0.0 && (0.0..=255.0).contains(&v) {
        Ok(v as u8)
    } else {
        Err(Error::InvalidData(format!("{v} is not a byte-valued pixel")))
    }
}

/// Inverse of [`parse_images`]. Accepts `n x h x w` or `n x 1 x h x w`
/// tensors whose values are integers in `0..=255`.
pub fn write_images(images: &Tensor) -> Result<Vec<u8>> {
    let d = images.dims();
    let (n, h, w) = match *d {
        [n, h, w] => (n, h, w),
        [n, 1, h, w] => (n, h, w),
        _ => return Err(Error::InvalidShape(format!("cannot store {d:?} as IDX images"))),
    };
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for e in [n, h, w] {
        out.extend_from_slice(&(e as u32).to_be_bytes());
    }
    for v in images.logical_iter() {
        out.push(pixel_byte(v)?);
    }
    Ok(out)
}

pub fn write_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

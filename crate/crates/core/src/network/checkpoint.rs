//! Binary model checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "FNN1"  u32 layer_count
//! per layer:  u8 tag  u32 tensor_count
//!   per tensor:  u32 rank  u32 dims[rank]  f32 data[product(dims)]
//! ```
//!
//! Layers with configuration (conv geometry, pooling window, activation
//! kind, dropout rate, batch-norm constants) store it as a leading rank-1
//! tensor. Gradients and optimizer state are not saved.

use std::fs;
use std::path::Path;

use crate::conv::ConvShape;
use crate::error::{Error, Result};
use crate::layers::{Activation, BatchNormState, ConvLayer, DenseLayer, Layer, PoolMode, PoolWindow};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FNN1";
const MAX_LAYERS: u32 = 1 << 16;
const MAX_TENSORS: u32 = 8;
const MAX_RANK: u32 = 4;
/// Largest integer carried exactly by an f32 config slot.
const MAX_CONFIG_INT: f32 = (1 << 24) as f32;

const TAG_DENSE: u8 = 1;
const TAG_CONV: u8 = 2;
const TAG_POOL: u8 = 3;
const TAG_ACTIVATION: u8 = 4;
const TAG_SOFTMAX: u8 = 5;
const TAG_DROPOUT: u8 = 6;
const TAG_BATCH_NORM: u8 = 7;

fn config(values: &[f32]) -> Tensor {
    Tensor::from_vec(&[values.len()], values.to_vec()).expect("rank-1 config")
}

fn layer_tensors(layer: &Layer) -> (u8, Vec<Tensor>) {
    match layer {
        Layer::Dense(d) => (TAG_DENSE, vec![d.w.clone(), d.b.clone()]),
        Layer::Conv(c) => {
            let s = c.shape;
            (
                TAG_CONV,
                vec![
                    config(&[s.c_in as f32, s.h as f32, s.w as f32, s.pad as f32]),
                    c.kernels.clone(),
                    c.b.clone(),
                ],
            )
        }
        Layer::Pool { mode, window } => {
            let m = match mode {
                PoolMode::Max => 0.0,
                PoolMode::Avg => 1.0,
            };
            (TAG_POOL, vec![config(&[m, window.h as f32, window.w as f32])])
        }
        Layer::Activation(a) => {
            let k = match a {
                Activation::Sigmoid => 0.0,
                Activation::Relu => 1.0,
            };
            (TAG_ACTIVATION, vec![config(&[k])])
        }
        Layer::Softmax => (TAG_SOFTMAX, Vec::new()),
        Layer::Dropout { p } => (TAG_DROPOUT, vec![config(&[*p])]),
        Layer::BatchNorm(bn) => (
            TAG_BATCH_NORM,
            vec![
                config(&[bn.momentum, bn.epsilon]),
                bn.gamma.clone(),
                bn.beta.clone(),
                bn.running_mean.clone(),
                bn.running_var.clone(),
            ],
        ),
    }
}

pub fn encode(layers: &[Layer]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for layer in layers {
        let (tag, tensors) = layer_tensors(layer);
        out.push(tag);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in &tensors {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.logical_iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Length(format!(
                "checkpoint ends inside {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32("tensor rank")?;
        if rank == 0 || rank > MAX_RANK {
            return Err(Error::Format(format!("tensor rank {rank} not in 1..=4")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        let mut len: usize = 1;
        for _ in 0..rank {
            let d = self.u32("tensor dims")? as usize;
            if d == 0 {
                return Err(Error::Format("zero tensor extent".into()));
            }
            len = len
                .checked_mul(d)
                .filter(|&l| l <= self.remaining() / 4)
                .ok_or_else(|| Error::Length("tensor larger than the remaining checkpoint".into()))?;
            dims.push(d);
        }
        let bytes = self.take(len * 4, "tensor data")?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Tensor::from_vec(&dims, data)
    }
}

fn config_ints(t: &Tensor, n: usize, what: &str) -> Result<Vec<usize>> {
    if t.dims() != [n] {
        return Err(Error::Format(format!("{what} config must hold {n} values")));
    }
    t.logical_iter()
        .map(|v| {
            if v.fract() == 0.0 && (0.0..=MAX_CONFIG_INT).contains(&v) {
                Ok(v as usize)
            } else {
                Err(Error::Format(format!("{what} config value {v} is not a count")))
            }
        })
        .collect()
}

fn expect_count(tensors: &[Tensor], n: usize, what: &str) -> Result<()> {
    if tensors.len() != n {
        return Err(Error::Format(format!(
            "{what} layer needs {n} tensors, found {}",
            tensors.len()
        )));
    }
    Ok(())
}

fn build_layer(tag: u8, mut t: Vec<Tensor>) -> Result<Layer> {
    let bad = |e: Error| Error::Format(format!("inconsistent layer: {e}"));
    match tag {
        TAG_DENSE => {
            expect_count(&t, 2, "dense")?;
            let b = t.pop().expect("two tensors");
            let w = t.pop().expect("two tensors");
            DenseLayer::from_parts(w, b).map(Layer::Dense).map_err(bad)
        }
        TAG_CONV => {
            expect_count(&t, 3, "conv")?;
            let c = config_ints(&t[0], 4, "conv")?;
            let kd = t[1].dims().to_vec();
            if kd.len() != 4 || kd[1] != c[0] {
                return Err(Error::Format(format!("conv kernels {kd:?} vs config {c:?}")));
            }
            let shape = ConvShape::new(1, c[0], kd[0], (kd[2], kd[3]), (c[1], c[2])).with_pad(c[3]);
            let b = t.pop().expect("three tensors");
            let k = t.pop().expect("three tensors");
            ConvLayer::from_parts(shape, k, b).map(Layer::Conv).map_err(bad)
        }
        TAG_POOL => {
            expect_count(&t, 1, "pool")?;
            let c = config_ints(&t[0], 3, "pool")?;
            let mode = match c[0] {
                0 => PoolMode::Max,
                1 => PoolMode::Avg,
                m => return Err(Error::Format(format!("unknown pooling mode {m}"))),
            };
            if c[1] == 0 || c[2] == 0 {
                return Err(Error::Format("empty pooling window".into()));
            }
            Ok(Layer::Pool {
                mode,
                window: PoolWindow { h: c[1], w: c[2] },
            })
        }
        TAG_ACTIVATION => {
            expect_count(&t, 1, "activation")?;
            match config_ints(&t[0], 1, "activation")?[0] {
                0 => Ok(Layer::Activation(Activation::Sigmoid)),
                1 => Ok(Layer::Activation(Activation::Relu)),
                k => Err(Error::Format(format!("unknown activation {k}"))),
            }
        }
        TAG_SOFTMAX => {
            expect_count(&t, 0, "softmax")?;
            Ok(Layer::Softmax)
        }
        TAG_DROPOUT => {
            expect_count(&t, 1, "dropout")?;
            if t[0].dims() != [1] {
                return Err(Error::Format("dropout config must hold 1 value".into()));
            }
            let p = t[0].to_vec()[0];
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Format(format!("dropout rate {p}")));
            }
            Ok(Layer::Dropout { p })
        }
        TAG_BATCH_NORM => {
            expect_count(&t, 5, "batch norm")?;
            if t[0].dims() != [2] {
                return Err(Error::Format("batch norm config must hold 2 values".into()));
            }
            let c = t[0].to_vec();
            let (momentum, epsilon) = (c[0], c[1]);
            if !(momentum > 0.0 && momentum < 1.0) || !(epsilon > 0.0) {
                return Err(Error::Format(format!("batch norm constants {momentum}, {epsilon}")));
            }
            let f = t[1].dims().to_vec();
            if f.len() != 1 || t[2..].iter().any(|x| x.dims() != f.as_slice()) {
                return Err(Error::Format("batch norm vectors differ in length".into()));
            }
            if t[4].logical_iter().any(|v| !(v >= 0.0)) {
                return Err(Error::Format("negative running variance".into()));
            }
            let mut bn = BatchNormState::new(f[0]);
            bn.momentum = momentum;
            bn.epsilon = epsilon;
            bn.running_var = t.pop().expect("five tensors");
            bn.running_mean = t.pop().expect("five tensors");
            bn.beta = t.pop().expect("five tensors");
            bn.gamma = t.pop().expect("five tensors");
            Ok(Layer::BatchNorm(bn))
        }
        other => Err(Error::Format(format!("unknown layer tag {other}"))),
    }
}

/// Parses a checkpoint. Never allocates more than the input can back.
pub fn decode(bytes: &[u8]) -> Result<Vec<Layer>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let count = r.u32("layer count")?;
    if count == 0 || count > MAX_LAYERS {
        return Err(Error::Format(format!("layer count {count}")));
    }
    let mut layers = Vec::new();
    for _ in 0..count {
        let tag = r.u8("layer tag")?;
        let n = r.u32("tensor count")?;
        if n > MAX_TENSORS {
            return Err(Error::Format(format!("{n} tensors in one layer")));
        }
        let tensors = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
        layers.push(build_layer(tag, tensors)?);
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    Ok(layers)
}

pub fn save(path: &Path, layers: &[Layer]) -> Result<()> {
    fs::write(path, encode(layers))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<Layer>> {
    decode(&fs::read(path)?)
}

/// Input sample dimensions implied by the first layer that pins them.
pub fn infer_input_dims(layers: &[Layer]) -> Result<Vec<usize>> {
    for l in layers {
        match l {
            Layer::Dense(d) => return Ok(vec![d.in_units()]),
            Layer::Conv(c) => return Ok(c.input_sample_dims().to_vec()),
            Layer::BatchNorm(bn) => return Ok(vec![bn.features()]),
            Layer::Pool { .. } => break,
            _ => {}
        }
    }
    Err(Error::Format("cannot tell the network input extents".into()))
}

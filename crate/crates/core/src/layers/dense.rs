use rand::Rng;

use super::init::glorot_uniform;
use crate::error::{shape_err, Result};
use crate::kernels::gemm::{sgemm, GemmFlags, MatRef};
use crate::tensor::Tensor;

/// Fully-connected layer: `y = x·wᵀ + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out_units x in_units`
    pub w: Tensor,
    pub b: Tensor,
    pub gw: Tensor,
    pub gb: Tensor,
}

/// `(batch, features)` view of a packed-or-padded tensor, flattening any
/// trailing axes.
fn as_matrix(x: &Tensor) -> (std::borrow::Cow<'_, Tensor>, usize, usize) {
    let batch = x.batch();
    let feats = x.sample_len();
    if x.rank() == 2 {
        return (std::borrow::Cow::Borrowed(x), batch, feats);
    }
    let packed = if x.is_packed() {
        std::borrow::Cow::Borrowed(x)
    } else {
        std::borrow::Cow::Owned(x.to_packed())
    };
    (packed, batch, feats)
}

fn ld_of(x: &Tensor) -> usize {
    if x.rank() == 2 {
        x.stride_last()
    } else {
        x.sample_len()
    }
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(in_units: usize, out_units: usize, rng: &mut R) -> Self {
        let w = glorot_uniform(&[out_units, in_units], in_units, out_units, rng);
        Self::from_parts(w, Tensor::zeros(&[out_units])).expect("consistent dense parts")
    }

    pub fn from_parts(w: Tensor, b: Tensor) -> Result<Self> {
        if w.rank() != 2 || b.dims() != [w.dims()[0]] {
            return Err(shape_err(format!(
                "dense weights {:?} and bias {:?} disagree",
                w.dims(),
                b.dims()
            )));
        }
        let w = w.to_packed();
        Ok(DenseLayer {
            gw: w.zeros_like(),
            gb: b.zeros_like(),
            w,
            b,
        })
    }

    pub fn in_units(&self) -> usize {
        self.w.dims()[1]
    }

    pub fn out_units(&self) -> usize {
        self.w.dims()[0]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.rank() < 2 || x.sample_len() != self.in_units() {
            return Err(shape_err(format!(
                "dense layer expects {} input features, got {:?}",
                self.in_units(),
                x.dims()
            )));
        }
        Ok(())
    }

    /// One GEMM for the whole mini-batch, then a per-row bias add.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let (xm, batch, feats) = as_matrix(x);
        let out = self.out_units();
        let mut y = vec![0.0f32; batch * out];
        sgemm(
            MatRef::strided(xm.as_slice(), batch, feats, ld_of(&xm)),
            MatRef::new(self.w.as_slice(), out, feats),
            GemmFlags::NT,
            &mut y,
            out,
            false,
        )?;
        let b = self.b.as_slice();
        for row in y.chunks_exact_mut(out) {
            for (v, &bias) in row.iter_mut().zip(b) {
                *v += bias;
            }
        }
        Tensor::from_vec(&[batch, out], y)
    }

    /// Returns `dx = dy·w` and accumulates `gw += dyᵀ·x`, `gb += Σ_rows dy`.
    /// `dx` has the dimensions of `x`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let out = self.out_units();
        if dy.dims() != [x.batch(), out] {
            return Err(shape_err(format!(
                "dense gradient {:?} does not match output [{}, {out}]",
                dy.dims(),
                x.batch()
            )));
        }
        let (xm, batch, feats) = as_matrix(x);
        let dym = MatRef::strided(dy.as_slice(), batch, out, dy.stride_last());

        let mut dx = vec![0.0f32; batch * feats];
        sgemm(
            dym,
            MatRef::new(self.w.as_slice(), out, feats),
            GemmFlags::NN,
            &mut dx,
            feats,
            false,
        )?;
        sgemm(
            dym,
            MatRef::strided(xm.as_slice(), batch, feats, ld_of(&xm)),
            GemmFlags::TN,
            self.gw.as_mut_slice(),
            feats,
            true,
        )?;
        let gb = self.gb.as_mut_slice();
        for r in 0..batch {
            for (g, &d) in gb.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        Tensor::from_vec(x.dims(), dx)
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }
}

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Keep/drop decisions from one training-mode forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub p: f32,
    /// 1.0 for kept units, 0.0 for dropped; `None` means all kept.
    pub mask: Option<Tensor>,
}

fn check_p(p: f32) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Inverted dropout: in training, kept units are scaled by `1/(1-p)` so
/// inference is the identity.
pub fn dropout_forward<R: Rng + ?Sized>(
    p: f32,
    x: &Tensor,
    training: bool,
    rng: &mut R,
) -> Result<(Tensor, DropoutMask)> {
    check_p(p)?;
    if !training {
        return Ok((x.clone(), DropoutMask { p, mask: None }));
    }
    let keep = 1.0 - p;
    let scale = 1.0 / keep;
    let mut mask = x.zeros_like();
    let mut y = x.clone();
    for r in 0..x.rows() {
        let m = mask.row_mut(r);
        for v in m.iter_mut() {
            *v = if p == 0.0 || rng.random::<f32>() < keep { 1.0 } else { 0.0 };
        }
        for (yv, &mv) in y.row_mut(r).iter_mut().zip(mask.row(r)) {
            *yv *= mv * scale;
        }
    }
    Ok((y, DropoutMask { p, mask: Some(mask) }))
}

pub fn dropout_backward(mask: &DropoutMask, dy: &Tensor) -> Result<Tensor> {
    let Some(m) = &mask.mask else {
        return Ok(dy.clone());
    };
    if m.dims() != dy.dims() {
        return Err(shape_err("dropout gradient shape mismatch"));
    }
    let scale = 1.0 / (1.0 - mask.p);
    let mut dx = dy.to_packed();
    for (d, mv) in dx.as_mut_slice().iter_mut().zip(m.logical_iter()) {
        *d *= mv * scale;
    }
    Ok(dx)
}

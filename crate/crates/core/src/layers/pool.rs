use rayon::prelude::*;

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Non-overlapping pooling window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolWindow {
    pub h: usize,
    pub w: usize,
}

impl PoolWindow {
    pub const TWO_BY_TWO: PoolWindow = PoolWindow { h: 2, w: 2 };
}

/// Winning input position of every max-pool output, as a logical row-major
/// offset into the pooled tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgMax(pub Vec<u32>);

fn out_dims(x_dims: &[usize], win: PoolWindow) -> Result<[usize; 4]> {
    if x_dims.len() != 4 {
        return Err(shape_err(format!("pooling expects rank 4, got {x_dims:?}")));
    }
    let (h, w) = (x_dims[2], x_dims[3]);
    if win.h == 0 || win.w == 0 || h % win.h != 0 || w % win.w != 0 {
        return Err(shape_err(format!(
            "{h}x{w} is not divisible by the {}x{} pooling window",
            win.h, win.w
        )));
    }
    Ok([x_dims[0], x_dims[1], h / win.h, w / win.w])
}

/// Pools `x` (`n x c x h x w`). Max mode also returns the argmax positions;
/// ties go to the first position in row-major window order.
pub fn pool_forward(mode: PoolMode, x: &Tensor, win: PoolWindow) -> Result<(Tensor, Option<ArgMax>)> {
    let od = out_dims(x.dims(), win)?;
    let (h, w) = (x.dims()[2], x.dims()[3]);
    let (oh, ow) = (od[2], od[3]);
    let x = if x.is_packed() {
        std::borrow::Cow::Borrowed(x)
    } else {
        std::borrow::Cow::Owned(x.to_packed())
    };
    let planes = od[0] * od[1];
    let mut y = vec![0.0f32; planes * oh * ow];
    let mut arg = vec![0u32; if mode == PoolMode::Max { y.len() } else { 0 }];
    let scale = 1.0 / (win.h * win.w) as f32;
    let src = x.as_slice();

    let pool_plane = |p: usize, yp: &mut [f32], ap: &mut [u32]| {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f32::NEG_INFINITY;
                let mut best_at = base + i * win.h * w + j * win.w;
                let mut sum = 0.0f32;
                for a in 0..win.h {
                    for b in 0..win.w {
                        let at = base + (i * win.h + a) * w + j * win.w + b;
                        let v = src[at];
                        sum += v;
                        if v > best {
                            best = v;
                            best_at = at;
                        }
                    }
                }
                match mode {
                    PoolMode::Max => {
                        yp[i * ow + j] = best;
                        ap[i * ow + j] = best_at as u32;
                    }
                    PoolMode::Avg => yp[i * ow + j] = sum * scale,
                }
            }
        }
    };

    let span = oh * ow;
    match mode {
        PoolMode::Max => y
            .par_chunks_mut(span)
            .zip(arg.par_chunks_mut(span))
            .enumerate()
            .for_each(|(p, (yp, ap))| pool_plane(p, yp, ap)),
        PoolMode::Avg => y
            .par_chunks_mut(span)
            .enumerate()
            .for_each(|(p, yp)| pool_plane(p, yp, &mut [])),
    }
    let y = Tensor::from_vec(&od, y)?;
    Ok((y, (mode == PoolMode::Max).then_some(ArgMax(arg))))
}

/// Routes `dy` back to the input: max mode to the recorded argmax, avg mode
/// spread uniformly over each window.
pub fn pool_backward(
    mode: PoolMode,
    dy: &Tensor,
    argmax: Option<&ArgMax>,
    input_dims: &[usize],
    win: PoolWindow,
) -> Result<Tensor> {
    let od = out_dims(input_dims, win)?;
    if dy.dims() != od {
        return Err(shape_err(format!(
            "pool gradient {:?} does not match output {od:?}",
            dy.dims()
        )));
    }
    let mut dx = Tensor::zeros(input_dims);
    match mode {
        PoolMode::Max => {
            let arg = argmax.ok_or_else(|| shape_err("max-pool backward needs argmax"))?;
            if arg.0.len() != dy.len() {
                return Err(shape_err("argmax length does not match gradient"));
            }
            let out = dx.as_mut_slice();
            for (&at, g) in arg.0.iter().zip(dy.logical_iter()) {
                let at = at as usize;
                if at >= out.len() {
                    return Err(shape_err("argmax position out of range"));
                }
                out[at] += g;
            }
        }
        PoolMode::Avg => {
            let (h, w) = (input_dims[2], input_dims[3]);
            let (oh, ow) = (od[2], od[3]);
            let scale = 1.0 / (win.h * win.w) as f32;
            let out = dx.as_mut_slice();
            for (o, g) in dy.logical_iter().enumerate() {
                let p = o / (oh * ow);
                let (i, j) = ((o / ow) % oh, o % ow);
                for a in 0..win.h {
                    for b in 0..win.w {
                        out[p * h * w + (i * win.h + a) * w + j * win.w + b] += g * scale;
                    }
                }
            }
        }
    }
    Ok(dx)
}

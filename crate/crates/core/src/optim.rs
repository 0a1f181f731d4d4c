//! Parameter update rules.
//!
//! Each rule keeps per-parameter slots addressed by a stable index, so one
//! [`Optimizer`] serves every tensor of a network.

use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    SgdMomentum,
    Adagrad,
    Adadelta,
    Adam,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::SgdMomentum,
        OptimizerKind::Adagrad,
        OptimizerKind::Adadelta,
        OptimizerKind::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Adadelta => "adadelta",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" | "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            "adadelta" => Ok(OptimizerKind::Adadelta),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::InvalidParameter(format!("unknown optimizer {s:?}"))),
        }
    }
}

/// Hyperparameters. Adadelta has no learning rate and ignores `lr`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f32,
    pub momentum: f32,
    pub weight_decay: f32,
    pub eps: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub rho: f32,
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, lr: f32) -> Self {
        OptimizerConfig {
            kind,
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
            eps: 1e-8,
            beta1: 0.9,
            beta2: 0.999,
            rho: 0.95,
        }
    }

    pub fn sgd(lr: f32, momentum: f32) -> Self {
        OptimizerConfig {
            momentum,
            ..Self::new(OptimizerKind::SgdMomentum, lr)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        // lr = 0 is allowed so a run can freeze parameters
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad(format!("learning rate must be >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.eps >= 0.0) {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2), ("rho", self.rho)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Slot {
    /// velocity, accumulated squared gradient, Eg or Adam's first moment
    a: Vec<f32>,
    /// Adadelta's Ex or Adam's second moment
    b: Vec<f32>,
    t: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    slots: Vec<Option<Slot>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            slots: Vec::new(),
        })
    }

    /// Adam step counter for parameter `index` (0 before its first step).
    pub fn steps(&self, index: usize) -> u64 {
        self.slots.get(index).and_then(|s| s.as_ref()).map_or(0, |s| s.t)
    }

    pub fn reset(&mut self) {
        self.slots.clear();
    }

    /// Updates `param` in place from `grad`, using the slots of parameter
    /// `index`. Padding positions of both tensors are left alone.
    pub fn step(&mut self, index: usize, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        if param.dims() != grad.dims() {
            return Err(shape_err(format!(
                "parameter {:?} and gradient {:?} differ",
                param.dims(),
                grad.dims()
            )));
        }
        let g = grad.to_vec();
        let packed = param.is_packed();
        let mut p = if packed { Vec::new() } else { param.to_vec() };
        {
            let ps: &mut [f32] = if packed { param.as_mut_slice() } else { &mut p };
            let len = ps.len();
            if self.slots.len() <= index {
                self.slots.resize(index + 1, None);
            }
            let slot = self.slots[index].get_or_insert_with(|| Slot {
                a: vec![0.0; len],
                b: vec![0.0; len],
                t: 0,
            });
            if slot.a.len() != len {
                return Err(shape_err(format!(
                    "parameter {index} changed size from {} to {len}",
                    slot.a.len()
                )));
            }
            apply(&self.config, slot, ps, &g);
        }
        if !packed {
            for (r, chunk) in p.chunks_exact(param.last_extent()).enumerate() {
                param.row_mut(r).copy_from_slice(chunk);
            }
        }
        Ok(())
    }
}

fn apply(c: &OptimizerConfig, s: &mut Slot, p: &mut [f32], g: &[f32]) {
    match c.kind {
        OptimizerKind::SgdMomentum => {
            for ((p, &g), v) in p.iter_mut().zip(g).zip(&mut s.a) {
                let g = g + c.weight_decay * *p;
                *v = c.momentum * *v - c.lr * g;
                *p += *v;
            }
        }
        OptimizerKind::Adagrad => {
            for ((p, &g), acc) in p.iter_mut().zip(g).zip(&mut s.a) {
                *acc += g * g;
                *p -= c.lr * g / (acc.sqrt() + c.eps);
            }
        }
        OptimizerKind::Adadelta => {
            for (((p, &g), eg), ex) in p.iter_mut().zip(g).zip(&mut s.a).zip(&mut s.b) {
                *eg = c.rho * *eg + (1.0 - c.rho) * g * g;
                let d = -(*ex + c.eps).sqrt() / (*eg + c.eps).sqrt() * g;
                *ex = c.rho * *ex + (1.0 - c.rho) * d * d;
                *p += d;
            }
        }
        OptimizerKind::Adam => {
            s.t += 1;
            let t = s.t as i32;
            let c1 = 1.0 - c.beta1.powi(t);
            let c2 = 1.0 - c.beta2.powi(t);
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(&mut s.a).zip(&mut s.b) {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= c.lr * mh / (vh.sqrt() + c.eps);
            }
        }
    }
}

//! Sequential networks: construction from a declarative description,
//! mini-batch training, evaluation and checkpoints.

pub mod checkpoint;
mod loss;
mod spec;

pub use loss::{squared_loss, softmax_cross_entropy};
pub use spec::{Act, LayerSpec, Loss, NetworkConfig, NetworkSpec};

use std::borrow::Cow;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::energy::{denoising_corrupt, Noise, Rbm, UnitKind};
use crate::error::{shape_err, Error, Result};
use crate::layers::{Activation, Aux, BatchNormState, ConvLayer, DenseLayer, Layer};
use crate::optim::Optimizer;
use crate::tensor::Tensor;

/// Rows per inference chunk in [`Network::evaluate`] and friends.
const EVAL_CHUNK: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches, weighted by size.
    pub loss: f32,
    /// Training-set accuracy after the epoch, in inference mode. `None`
    /// for reconstruction training.
    pub accuracy: Option<f32>,
    pub seconds: f64,
    pub batches: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub test_accuracy: Option<f32>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f32> {
        self.epochs.last().map(|e| e.loss)
    }
}

#[derive(Clone, Debug)]
pub struct Network {
    layers: Vec<Layer>,
    /// Sample dimensions each layer consumes; one extra entry for the output.
    dims: Vec<Vec<usize>>,
    optimizer: Optimizer,
    config: NetworkConfig,
    rng: ChaCha8Rng,
}

/// State of one training-mode forward pass.
struct Trace {
    inputs: Vec<Tensor>,
    outputs: Vec<Tensor>,
    aux: Vec<Aux>,
}

impl Network {
    /// Builds and initializes a network. Chain errors name 1-based entry
    /// positions of the description.
    pub fn build(spec: &NetworkSpec) -> Result<Network> {
        spec.config.validate()?;
        if spec.layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.config.seed);
        let mut current = spec.layers[0].declared_input().ok_or_else(|| {
            Error::InvalidSpec("the first layer must declare its input extents".into())
        })?;
        let mut layers = Vec::new();
        for (i, ls) in spec.layers.iter().enumerate() {
            if let Some(want) = ls.declared_input() {
                let flat = |d: &[usize]| d.iter().product::<usize>();
                let ok = match ls {
                    LayerSpec::Conv { .. } => current == want,
                    _ => flat(&current) == flat(&want),
                };
                if !ok {
                    return Err(Error::ChainBreak {
                        from: i,
                        to: i + 1,
                        detail: format!("output {current:?} does not fit input {want:?}"),
                    });
                }
            }
            let mut push = |layer: Layer, current: &mut Vec<usize>| -> Result<()> {
                *current = layer.output_sample_dims(current).map_err(|e| Error::ChainBreak {
                    from: i,
                    to: i + 1,
                    detail: e.to_string(),
                })?;
                layers.push(layer);
                Ok(())
            };
            match ls {
                LayerSpec::Dense { inputs, outputs, act } => {
                    if *inputs == 0 || *outputs == 0 {
                        return Err(Error::InvalidSpec(format!("layer {}: empty dense layer", i + 1)));
                    }
                    push(Layer::Dense(DenseLayer::new(*inputs, *outputs, &mut rng)), &mut current)?;
                    push_act(*act, &mut current, &mut push)?;
                }
                LayerSpec::Conv { act, .. } => {
                    let shape = ls.conv_shape().expect("conv entry");
                    let conv = ConvLayer::new(shape, &mut rng)
                        .map_err(|e| Error::InvalidSpec(format!("layer {}: {e}", i + 1)))?
                        .with_policy(spec.config.conv_policy.clone());
                    push(Layer::Conv(conv), &mut current)?;
                    push_act(*act, &mut current, &mut push)?;
                }
                LayerSpec::Pool { mode, window } => push(
                    Layer::Pool {
                        mode: *mode,
                        window: *window,
                    },
                    &mut current,
                )?,
                LayerSpec::Dropout { p } => {
                    if !(0.0..1.0).contains(p) {
                        return Err(Error::InvalidSpec(format!("layer {}: dropout rate {p}", i + 1)));
                    }
                    push(Layer::Dropout { p: *p }, &mut current)?
                }
                LayerSpec::BatchNorm { features } => {
                    push(Layer::BatchNorm(BatchNormState::new(*features)), &mut current)?
                }
            }
        }
        let input = spec.layers[0].declared_input().expect("checked above");
        Network::assemble(layers, input, spec.config.clone(), rng)
    }

    /// Wraps already-constructed layers, checking that they chain.
    pub fn from_layers(layers: Vec<Layer>, input: Vec<usize>, config: NetworkConfig) -> Result<Network> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Network::assemble(layers, input, config, rng)
    }

    fn assemble(layers: Vec<Layer>, input: Vec<usize>, config: NetworkConfig, rng: ChaCha8Rng) -> Result<Network> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network has no layers".into()));
        }
        let mut dims = vec![input];
        for (i, l) in layers.iter().enumerate() {
            let next = l.output_sample_dims(&dims[i]).map_err(|e| Error::ChainBreak {
                from: i,
                to: i + 1,
                detail: e.to_string(),
            })?;
            dims.push(next);
        }
        Ok(Network {
            optimizer: Optimizer::new(config.optimizer)?,
            layers,
            dims,
            config,
            rng,
        })
    }

    /// A classifier initialized from a pretrained RBM stack: one dense layer
    /// per RBM (weights and hidden biases copied), then a fresh
    /// `classes`-way softmax layer.
    pub fn from_dbn(rbms: &[Rbm], classes: usize, config: NetworkConfig) -> Result<Network> {
        let first = rbms
            .first()
            .ok_or_else(|| Error::InvalidSpec("empty RBM stack".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut layers = Vec::new();
        for rbm in rbms {
            layers.push(Layer::Dense(DenseLayer::from_parts(rbm.w.clone(), rbm.bh.clone())?));
            match rbm.hidden_kind {
                UnitKind::Binary => layers.push(Layer::Activation(Activation::Sigmoid)),
                UnitKind::Relu => layers.push(Layer::Activation(Activation::Relu)),
                UnitKind::Gaussian => {}
            }
        }
        let last = rbms.last().expect("non-empty").hidden();
        layers.push(Layer::Dense(DenseLayer::new(last, classes, &mut rng)));
        layers.push(Layer::Softmax);
        config.validate()?;
        Network::assemble(layers, vec![first.visible()], config, rng)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.dims[0]
    }

    pub fn output_dims(&self) -> &[usize] {
        self.dims.last().expect("at least input dims")
    }

    pub fn output_len(&self) -> usize {
        self.output_dims().iter().product()
    }

    /// Number of parameter tensors.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params().len()).sum()
    }

    fn fit_input<'a>(&self, x: &'a Tensor) -> Result<Cow<'a, Tensor>> {
        let want: usize = self.dims[0].iter().product();
        if x.rank() < 2 || x.sample_len() != want {
            return Err(shape_err(format!(
                "network takes samples of {:?}, got {:?}",
                self.dims[0],
                x.dims()
            )));
        }
        Ok(Cow::Borrowed(x))
    }

    /// Brings `x` into the layout layer `i` expects.
    fn shaped_for(&self, i: usize, x: Tensor) -> Result<Tensor> {
        let want = &self.dims[i];
        if x.dims()[1..] == want[..] || !matches!(self.layers[i], Layer::Conv(_) | Layer::Pool { .. }) {
            return Ok(x);
        }
        let mut d = vec![x.batch()];
        d.extend_from_slice(want);
        x.reshape(&d)
    }

    /// Inference-mode forward pass: dropout off, batch norm on running
    /// statistics, final softmax applied.
    pub fn forward_batch(&self, x: &Tensor) -> Result<Tensor> {
        let x = self.fit_input(x)?;
        let mut h = x.into_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            h = self.shaped_for(i, h)?;
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Class predictions (argmax over outputs), computed in chunks.
    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        let n = x.batch();
        let mut out = Vec::with_capacity(n);
        for lo in (0..n).step_by(EVAL_CHUNK) {
            let hi = (lo + EVAL_CHUNK).min(n);
            let chunk = x.slice_batch(lo, hi)?.to_tensor();
            let y = self.forward_batch(&chunk)?.to_vec();
            out.extend(y.chunks_exact(self.output_len()).map(argmax));
        }
        Ok(out)
    }

    /// Fraction of samples whose argmax prediction equals the label.
    pub fn evaluate(&self, x: &Tensor, labels: &[u8]) -> Result<f32> {
        check_labels(x, labels)?;
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(p, l)| **p == **l as usize).count();
        Ok(hits as f32 / labels.len() as f32)
    }

    fn uses_folded_softmax(&self) -> bool {
        self.config.loss == Loss::CrossEntropy && matches!(self.layers.last(), Some(Layer::Softmax))
    }

    fn forward_train(&mut self, x: &Tensor) -> Result<Trace> {
        let stop = self.layers.len() - self.uses_folded_softmax() as usize;
        let mut trace = Trace {
            inputs: Vec::with_capacity(stop),
            outputs: Vec::with_capacity(stop),
            aux: Vec::with_capacity(stop),
        };
        let mut h = self.fit_input(x)?.into_owned();
        for i in 0..stop {
            h = self.shaped_for(i, h)?;
            let (y, aux) = self.layers[i].forward(&h, true, &mut self.rng)?;
            trace.inputs.push(h);
            trace.outputs.push(y.clone());
            trace.aux.push(aux);
            h = y;
        }
        Ok(trace)
    }

    /// Loss of `x` against `target` and the gradient w.r.t. the last
    /// computed activation of `trace`.
    fn loss_and_grad(&self, trace: &Trace, x: &Tensor, target: &Tensor) -> Result<(f32, Tensor)> {
        let top = trace.outputs.last().map_or(x, |t| t);
        let batch = top.batch();
        let top = if top.rank() == 2 {
            Cow::Borrowed(top)
        } else {
            Cow::Owned(top.clone().reshape(&[batch, top.sample_len()])?)
        };
        let target = if target.rank() == 2 {
            Cow::Borrowed(target)
        } else {
            Cow::Owned(target.to_packed().reshape(&[target.batch(), target.sample_len()])?)
        };
        match self.config.loss {
            Loss::CrossEntropy => softmax_cross_entropy(&top, &target),
            Loss::Squared => squared_loss(&top, &target),
        }
    }

    /// One optimization step on a mini-batch: forward in training mode,
    /// loss, backward through every layer, one optimizer step per
    /// parameter tensor, gradients cleared. Returns the batch loss.
    ///
    /// `target` is one-hot for cross-entropy, the desired output otherwise.
    pub fn train_minibatch(&mut self, x: &Tensor, target: &Tensor) -> Result<f32> {
        if target.batch() != x.batch() || target.sample_len() != self.output_len() {
            return Err(shape_err(format!(
                "targets {:?} do not match a batch of {} with {} outputs",
                target.dims(),
                x.batch(),
                self.output_len()
            )));
        }
        let trace = self.forward_train(x)?;
        let (loss, grad) = self.loss_and_grad(&trace, x, target)?;
        self.backward(&trace, grad)?;
        self.apply_gradients()?;
        Ok(loss)
    }

    fn backward(&mut self, trace: &Trace, grad: Tensor) -> Result<()> {
        let mut dy = grad;
        for i in (0..trace.inputs.len()).rev() {
            let y = &trace.outputs[i];
            if dy.dims() != y.dims() {
                dy = dy.to_packed().reshape(y.dims())?;
            }
            dy = self.layers[i].backward(&trace.inputs[i], y, &trace.aux[i], &dy)?;
        }
        Ok(())
    }

    fn apply_gradients(&mut self) -> Result<()> {
        let mut index = 0;
        for layer in &mut self.layers {
            for (param, grad) in layer.params_and_grads() {
                self.optimizer.step(index, param, grad)?;
                grad.fill(0.0);
                index += 1;
            }
        }
        Ok(())
    }

    /// Accumulated parameter gradients of one batch without updating the
    /// parameters; gradients are left in the layers.
    pub fn compute_gradients(&mut self, x: &Tensor, target: &Tensor) -> Result<f32> {
        let trace = self.forward_train(x)?;
        let (loss, grad) = self.loss_and_grad(&trace, x, target)?;
        self.backward(&trace, grad)?;
        Ok(loss)
    }

    /// Training loss of a batch without touching any state (no dropout,
    /// running batch-norm statistics).
    pub fn loss(&self, x: &Tensor, target: &Tensor) -> Result<f32> {
        let mut h = self.fit_input(x)?.into_owned();
        let stop = self.layers.len() - self.uses_folded_softmax() as usize;
        for i in 0..stop {
            h = self.shaped_for(i, h)?;
            h = self.layers[i].infer(&h)?;
        }
        let trace = Trace {
            inputs: Vec::new(),
            outputs: vec![h],
            aux: Vec::new(),
        };
        Ok(self.loss_and_grad(&trace, x, target)?.0)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    /// `epochs` passes over `(x, labels)` in mini-batches, reshuffled each
    /// epoch; the last batch of an epoch may be smaller.
    pub fn fit(&mut self, x: &Tensor, labels: &[u8], epochs: usize) -> Result<TrainReport> {
        self.fit_observed(x, labels, epochs, |_| {})
    }

    /// [`Network::fit`] with a callback after every epoch.
    pub fn fit_observed(
        &mut self,
        x: &Tensor,
        labels: &[u8],
        epochs: usize,
        mut observer: impl FnMut(&EpochStats),
    ) -> Result<TrainReport> {
        check_labels(x, labels)?;
        let classes = self.output_len();
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::InvalidLabel(format!("label {bad} with {classes} outputs")));
        }
        self.train_loop(x, epochs, &mut observer, |idx| one_hot_rows(labels, idx, classes), true, labels)
    }

    /// Denoising autoencoder training: inputs corrupted by `noise` (fresh
    /// every batch), clean inputs as targets, squared loss.
    pub fn fit_autoencoder(&mut self, x: &Tensor, noise: Option<Noise>, epochs: usize) -> Result<TrainReport> {
        if self.config.loss != Loss::Squared {
            return Err(Error::InvalidParameter("autoencoder training needs the squared loss".into()));
        }
        if x.sample_len() != self.output_len() {
            return Err(shape_err(format!(
                "autoencoder outputs {} values for {}-value inputs",
                self.output_len(),
                x.sample_len()
            )));
        }
        let packed = x.to_packed();
        let flat = packed.clone().reshape(&[x.batch(), x.sample_len()])?;
        let clean = |idx: &[usize]| Ok(flat.gather_batch(idx));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed);
        let mut corrupt = |batch: Tensor| match noise {
            Some(n) => denoising_corrupt(&batch, n, &mut rng),
            None => Ok(batch),
        };
        self.train_loop_with(&packed, epochs, &mut |_| {}, clean, &mut corrupt, false, &[])
    }

    fn train_loop(
        &mut self,
        x: &Tensor,
        epochs: usize,
        observer: &mut dyn FnMut(&EpochStats),
        targets: impl Fn(&[usize]) -> Result<Tensor>,
        classify: bool,
        labels: &[u8],
    ) -> Result<TrainReport> {
        self.train_loop_with(x, epochs, observer, targets, &mut |t| Ok(t), classify, labels)
    }

    #[allow(clippy::too_many_arguments)]
    fn train_loop_with(
        &mut self,
        x: &Tensor,
        epochs: usize,
        observer: &mut dyn FnMut(&EpochStats),
        targets: impl Fn(&[usize]) -> Result<Tensor>,
        prepare: &mut dyn FnMut(Tensor) -> Result<Tensor>,
        classify: bool,
        labels: &[u8],
    ) -> Result<TrainReport> {
        let n = x.batch();
        if n == 0 || x.is_empty() {
            return Err(Error::InvalidData("empty training set".into()));
        }
        if epochs == 0 {
            return Err(Error::InvalidParameter("at least one epoch is required".into()));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut report = TrainReport::default();
        for epoch in 0..epochs {
            let start = Instant::now();
            order.shuffle(&mut self.rng);
            let mut total = 0.0f64;
            let mut batches = 0;
            for idx in order.chunks(self.config.batch_size) {
                let xb = prepare(x.gather_batch(idx))?;
                let tb = targets(idx)?;
                total += self.train_minibatch(&xb, &tb)? as f64 * idx.len() as f64;
                batches += 1;
            }
            let seconds = start.elapsed().as_secs_f64();
            let accuracy = if classify { Some(self.evaluate(x, labels)?) } else { None };
            let stats = EpochStats {
                epoch,
                loss: (total / n as f64) as f32,
                accuracy,
                seconds,
                batches,
            };
            observer(&stats);
            report.epochs.push(stats);
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(path, &self.layers)
    }

    /// Restores layers from a checkpoint; training state comes from `config`.
    pub fn load(path: &Path, config: NetworkConfig) -> Result<Network> {
        let mut layers = checkpoint::load(path)?;
        for l in &mut layers {
            if let Layer::Conv(c) = l {
                c.policy = config.conv_policy.clone();
            }
        }
        let input = checkpoint::infer_input_dims(&layers)?;
        Network::from_layers(layers, input, config)
    }
}

fn push_act(
    act: Act,
    current: &mut Vec<usize>,
    push: &mut impl FnMut(Layer, &mut Vec<usize>) -> Result<()>,
) -> Result<()> {
    match act {
        Act::Identity => Ok(()),
        Act::Softmax => push(Layer::Softmax, current),
        a => push(Layer::Activation(a.activation().expect("elementwise act")), current),
    }
}

fn check_labels(x: &Tensor, labels: &[u8]) -> Result<()> {
    if x.rank() < 2 || x.batch() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} labels for inputs {:?}",
            labels.len(),
            x.dims()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidData("empty dataset".into()));
    }
    Ok(())
}

fn one_hot_rows(labels: &[u8], idx: &[usize], classes: usize) -> Result<Tensor> {
    let mut t = vec![0.0f32; idx.len() * classes];
    for (r, &i) in idx.iter().enumerate() {
        t[r * classes + labels[i] as usize] = 1.0;
    }
    Tensor::from_vec(&[idx.len(), classes], t)
}

/// Index of the largest value; ties go to the first.
pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

use rand::seq::SliceRandom;
use rand::Rng;

use super::rbm::Rbm;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Gibbs steps per update.
    pub k: usize,
    /// Reshuffle the samples every epoch.
    pub shuffle: bool,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 100,
            lr: 0.1,
            k: 1,
            shuffle: true,
        }
    }
}

/// What the pretraining loop reports to its observer.
#[derive(Debug)]
pub enum PretrainEvent<'a> {
    /// Layer `layer` is about to be trained on `input`.
    LayerStart { layer: usize, input: &'a Tensor },
    /// Mean reconstruction error per sample over one epoch.
    Epoch { layer: usize, epoch: usize, recon_error: f32 },
}

/// Trains one RBM for `config.epochs` passes over `data` (`n x visible`).
/// Returns the mean reconstruction error of every epoch.
pub fn train_rbm<R: Rng + ?Sized>(
    rbm: &mut Rbm,
    data: &Tensor,
    config: &PretrainConfig,
    rng: &mut R,
) -> Result<Vec<f32>> {
    train_rbm_observed(rbm, data, config, rng, 0, &mut |_| {})
}

fn train_rbm_observed<R: Rng + ?Sized>(
    rbm: &mut Rbm,
    data: &Tensor,
    config: &PretrainConfig,
    rng: &mut R,
    layer: usize,
    observer: &mut dyn FnMut(PretrainEvent<'_>),
) -> Result<Vec<f32>> {
    if config.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    let n = data.batch();
    if n == 0 {
        return Err(Error::InvalidData("no samples to pretrain on".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut errors = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(rng);
        }
        let mut total = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            let batch = data.gather_batch(chunk);
            total += rbm.cd_k(&batch, config.k, config.lr, rng)? as f64 * chunk.len() as f64;
        }
        let err = (total / n as f64) as f32;
        observer(PretrainEvent::Epoch {
            layer,
            epoch,
            recon_error: err,
        });
        errors.push(err);
    }
    Ok(errors)
}

/// Greedy layer-wise pretraining: each RBM is trained on the hidden means
/// of the already-trained layers below it. Returns per-layer epoch errors.
pub fn dbn_pretrain<R: Rng + ?Sized>(
    layers: &mut [Rbm],
    data: &Tensor,
    config: &PretrainConfig,
    rng: &mut R,
    mut observer: impl FnMut(PretrainEvent<'_>),
) -> Result<Vec<Vec<f32>>> {
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].hidden() != pair[1].visible() {
            return Err(Error::ChainBreak {
                from: i + 1,
                to: i + 2,
                detail: format!(
                    "{} hidden units feed {} visible units",
                    pair[0].hidden(),
                    pair[1].visible()
                ),
            });
        }
    }
    if let Some(first) = layers.first() {
        if data.sample_len() != first.visible() {
            return Err(Error::InvalidShape(format!(
                "data has {} features, first layer expects {}",
                data.sample_len(),
                first.visible()
            )));
        }
    }
    let mut input = data.to_packed();
    let mut report = Vec::with_capacity(layers.len());
    for (i, rbm) in layers.iter_mut().enumerate() {
        if i > 0 {
            let n = input.batch();
            input = input.reshape(&[n, rbm.visible()])?;
        }
        observer(PretrainEvent::LayerStart { layer: i, input: &input });
        report.push(train_rbm_observed(rbm, &input, config, rng, i, &mut observer)?);
        input = rbm.hidden_means(&input)?;
    }
    Ok(report)
}

//! The built-in experiments and the training driver.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use fastnn::conv::{ConvBackend, ConvPolicy, Dispatcher};
use fastnn::data::{self, scale_pre, Dataset, Split};
use fastnn::network::{Act, LayerSpec, Network, NetworkConfig, NetworkSpec, TrainReport};
use fastnn::optim::OptimizerConfig;
use thiserror::Error;

use crate::report::BenchRecord;

/// Desk-scale defaults for `run`.
pub const DESK_SUBSET: usize = 5000;
pub const DESK_EPOCHS: usize = 5;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown experiment {0:?} (try `list`)")]
    UnknownExperiment(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Library(#[from] fastnn::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    MnistDense,
    MnistCnn,
    CifarCnn,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::MnistDense, Model::MnistCnn, Model::CifarCnn];

    pub fn name(self) -> &'static str {
        match self {
            Model::MnistDense => "mnist_dense",
            Model::MnistCnn => "mnist_cnn",
            Model::CifarCnn => "cifar_cnn",
        }
    }

    pub fn dataset(self) -> DatasetKind {
        match self {
            Model::MnistDense | Model::MnistCnn => DatasetKind::Mnist,
            Model::CifarCnn => DatasetKind::Cifar10,
        }
    }

    pub fn layers(self) -> Vec<LayerSpec> {
        match self {
            Model::MnistDense => vec![
                LayerSpec::dense(784, 500, Act::Sigmoid),
                LayerSpec::dense(500, 250, Act::Sigmoid),
                LayerSpec::dense(250, 10, Act::Softmax),
            ],
            Model::MnistCnn => vec![
                LayerSpec::conv([1, 28, 28], 8, (5, 5), Act::Sigmoid),
                LayerSpec::max_pool(2, 2),
                LayerSpec::conv([8, 12, 12], 8, (5, 5), Act::Sigmoid),
                LayerSpec::max_pool(2, 2),
                LayerSpec::dense(8 * 4 * 4, 150, Act::Sigmoid),
                LayerSpec::dense(150, 10, Act::Softmax),
            ],
            Model::CifarCnn => vec![
                LayerSpec::conv([3, 32, 32], 12, (5, 5), Act::Relu),
                LayerSpec::max_pool(2, 2),
                LayerSpec::conv([12, 14, 14], 24, (3, 3), Act::Relu),
                LayerSpec::max_pool(2, 2),
                LayerSpec::dense(24 * 6 * 6, 64, Act::Relu),
                LayerSpec::dense(64, 10, Act::Softmax),
            ],
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        Model::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| BenchError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub model: Model,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub momentum: f32,
    /// Cap on training samples; `None` uses the whole training set.
    pub subset: Option<usize>,
    pub seed: u64,
    pub forced_backend: Option<ConvBackend>,
}

impl ExperimentConfig {
    pub fn name(&self) -> &'static str {
        self.model.name()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.epochs == 0 {
            return Err(BenchError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(BenchError::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.subset == Some(0) {
            return Err(BenchError::InvalidConfig("subset must be at least 1".into()));
        }
        if self.dataset != self.model.dataset() {
            return Err(BenchError::InvalidConfig(format!(
                "{} does not train on {:?}",
                self.model, self.dataset
            )));
        }
        Ok(())
    }

    /// Backend tag for reports.
    pub fn backend_tag(&self) -> &'static str {
        self.forced_backend.map_or("auto", ConvBackend::tag)
    }

    pub fn network_spec(&self, dispatcher: Arc<Dispatcher>) -> NetworkSpec {
        let mut policy = ConvPolicy::with_dispatcher(dispatcher);
        if let Some(b) = self.forced_backend {
            policy = policy.forcing(b);
        }
        let mut config = NetworkConfig::new(
            OptimizerConfig::sgd(self.lr, self.momentum),
            self.batch_size,
            self.seed,
        );
        config.conv_policy = policy;
        NetworkSpec::new(self.model.layers(), config)
    }
}

/// The published settings of a named experiment.
///
/// The CNN on MNIST reuses the dense network's learning rate and momentum.
pub fn builtin_experiment(name: &str) -> Result<ExperimentConfig, BenchError> {
    let model: Model = name.parse()?;
    let (epochs, lr, momentum) = match model {
        Model::MnistDense | Model::MnistCnn => (50, 0.1, 0.9),
        Model::CifarCnn => (50, 0.001, 0.9),
    };
    Ok(ExperimentConfig {
        dataset: model.dataset(),
        model,
        epochs,
        batch_size: 100,
        lr,
        momentum,
        subset: None,
        seed: 0,
        forced_backend: None,
    })
}

/// Outcome of one run: the network's training report plus one record per
/// epoch.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: TrainReport,
    pub records: Vec<BenchRecord>,
}

/// Loads the experiment's dataset from the cache and runs it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, BenchError> {
    config.validate()?;
    let (train, test) = load_data(config.dataset)?;
    run_on(config, &train, &test, fastnn::conv::dispatch::global())
}

/// Train and test splits scaled to `[0, 1]`.
pub fn load_data(kind: DatasetKind) -> Result<(Dataset, Dataset), BenchError> {
    let load = |split| match kind {
        DatasetKind::Mnist => data::mnist(split),
        DatasetKind::Cifar10 => data::cifar10(split),
    };
    Ok((scale_pre(load(Split::Train)?, 255.0)?, scale_pre(load(Split::Test)?, 255.0)?))
}

/// Runs `config` on already-loaded, already-scaled data. After every epoch
/// the whole `test` set is evaluated; timings cover the batch loop only.
pub fn run_on(
    config: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    dispatcher: Arc<Dispatcher>,
) -> Result<ExperimentOutcome, BenchError> {
    config.validate()?;
    let train = match config.subset {
        Some(n) if n > train.len() => {
            return Err(BenchError::InvalidConfig(format!(
                "subset {n} exceeds the {} training samples",
                train.len()
            )))
        }
        Some(n) => train.subset(n)?,
        None => train.clone(),
    };
    let mut net = Network::build(&config.network_spec(dispatcher))?;
    let mut report = TrainReport::default();
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut r = net.fit(&train.images, &train.labels, 1)?;
        let mut stats = r.epochs.pop().expect("one epoch");
        stats.epoch = epoch;
        let accuracy = net.evaluate(&test.images, &test.labels)?;
        records.push(BenchRecord {
            experiment: config.name().to_string(),
            backend: config.backend_tag().to_string(),
            epoch,
            seconds: stats.seconds,
            loss: stats.loss as f64,
            accuracy: Some(accuracy as f64),
        });
        report.epochs.push(stats);
        report.test_accuracy = Some(accuracy);
    }
    Ok(ExperimentOutcome { report, records })
}

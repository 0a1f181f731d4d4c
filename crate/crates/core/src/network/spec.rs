use crate::conv::{ConvPolicy, ConvShape};
use crate::error::{Error, Result};
use crate::layers::{Activation, PoolMode, PoolWindow};
use crate::optim::OptimizerConfig;

/// Nonlinearity attached to a dense or convolutional layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Act {
    Identity,
    Sigmoid,
    Relu,
    Softmax,
}

impl Act {
    pub(crate) fn activation(self) -> Option<Activation> {
        match self {
            Act::Sigmoid => Some(Activation::Sigmoid),
            Act::Relu => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// One entry of a declarative network description.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        act: Act,
    },
    Conv {
        /// `[c_in, h, w]` of one input sample.
        input: [usize; 3],
        kernels: usize,
        kh: usize,
        kw: usize,
        act: Act,
    },
    Pool {
        mode: PoolMode,
        window: PoolWindow,
    },
    Dropout {
        p: f32,
    },
    BatchNorm {
        features: usize,
    },
}

impl LayerSpec {
    pub fn dense(inputs: usize, outputs: usize, act: Act) -> Self {
        LayerSpec::Dense { inputs, outputs, act }
    }

    pub fn conv(input: [usize; 3], kernels: usize, (kh, kw): (usize, usize), act: Act) -> Self {
        LayerSpec::Conv {
            input,
            kernels,
            kh,
            kw,
            act,
        }
    }

    pub fn max_pool(h: usize, w: usize) -> Self {
        LayerSpec::Pool {
            mode: PoolMode::Max,
            window: PoolWindow { h, w },
        }
    }

    pub fn avg_pool(h: usize, w: usize) -> Self {
        LayerSpec::Pool {
            mode: PoolMode::Avg,
            window: PoolWindow { h, w },
        }
    }

    /// Sample dimensions this entry consumes, when it pins them.
    pub(crate) fn declared_input(&self) -> Option<Vec<usize>> {
        match self {
            LayerSpec::Dense { inputs, .. } => Some(vec![*inputs]),
            LayerSpec::Conv { input, .. } => Some(input.to_vec()),
            LayerSpec::BatchNorm { features } => Some(vec![*features]),
            _ => None,
        }
    }

    pub(crate) fn conv_shape(&self) -> Option<ConvShape> {
        match *self {
            LayerSpec::Conv {
                input,
                kernels,
                kh,
                kw,
                ..
            } => Some(ConvShape::new(1, input[0], kernels, (kh, kw), (input[1], input[2]))),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Loss {
    /// Softmax cross-entropy on the logits feeding a final softmax.
    CrossEntropy,
    /// `½·mean_batch ‖y − t‖²`
    Squared,
}

/// Training hyperparameters of a network.
#[derive(Clone, Debug)]
pub struct NetworkConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    pub conv_policy: ConvPolicy,
}

impl NetworkConfig {
    pub fn new(optimizer: OptimizerConfig, batch_size: usize, seed: u64) -> Self {
        NetworkConfig {
            optimizer,
            batch_size,
            seed,
            loss: Loss::CrossEntropy,
            conv_policy: ConvPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::new(OptimizerConfig::sgd(0.1, 0.9), 100, 0)
    }
}

#[derive(Clone, Debug)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
    pub config: NetworkConfig,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>, config: NetworkConfig) -> Self {
        NetworkSpec { layers, config }
    }
}

//! Energy-based models: RBMs trained with contrastive divergence, greedy
//! DBN pretraining, a convolutional RBM and denoising corruption.

mod crbm;
mod dbn;
mod denoise;
mod rbm;

pub use crbm::Crbm;
pub use dbn::{dbn_pretrain, train_rbm, PretrainConfig, PretrainEvent};
pub use denoise::{denoising_corrupt, Noise};
pub use rbm::{Rbm, UnitKind};

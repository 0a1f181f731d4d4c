pub mod config;
pub mod data;
pub mod conv;
pub mod energy;
pub mod error;
pub mod kernels;
pub mod layers;
pub mod network;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{make_tensor, Tensor, VectorWidth};

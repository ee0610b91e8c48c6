//! Regularised inversion of feed-forward networks through lifted Bregman
//! losses.

pub mod bregman;
pub mod data;
pub mod error;
pub mod experiments;
pub mod network;
pub mod operator;
pub mod prox;
pub mod rng;
pub mod solvers;
pub mod tensor;
pub mod train;
pub mod tv;

pub use bregman::BregmanLoss;
pub use error::{Error, Result};
pub use network::{Layer, Network};
pub use operator::LinearOperator;
pub use prox::ProxPenalty;
pub use rng::SeededRng;
pub use tensor::Tensor;
pub use tv::DualField;

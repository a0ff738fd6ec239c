//! Tensor engine and graph Q-network.

pub mod optim;
pub mod qnet;
pub mod tape;

pub use optim::{clip_global_norm, Optimizer, OptimizerKind};
pub use qnet::{ForwardCache, QNet, QNetConfig};
pub use tape::{Mat, Tape, Var};

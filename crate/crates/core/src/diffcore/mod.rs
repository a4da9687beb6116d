//! Minimal reverse-mode differentiation core.

pub mod checkpoint;
mod optim;
mod params;
mod real;
mod tape;

pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{ParamId, ParamStore, Parameter};
pub use real::{Precision, Real};
pub use tape::{BatchNormStats, BnConfig, BnMode, OpKind, Tape, TensorError, Value};

//! Cross-user activity recognition with anatomical sensor graphs, graph
//! convolution and adversarial source-user suppression.

pub mod diffcore;
pub mod graphs;
pub mod model;
pub mod data;
pub mod train;
pub mod verify;
pub mod config;

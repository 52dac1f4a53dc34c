//! Multi-label image classification built from scratch.
mod codec;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod params;
pub mod tensor;
pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod data;
pub mod checkpoint;
pub mod model;
pub mod config;
pub mod train;
pub mod report;
pub mod gradcheck;
pub mod cli;

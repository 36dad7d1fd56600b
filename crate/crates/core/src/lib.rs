//! Retinal OCT layer segmentation: a fully convolutional encoder–decoder
//! with hand-written forward and backward passes, trained with a weighted
//! logistic + Dice composite loss.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{LabelMap, Shape, Tensor};

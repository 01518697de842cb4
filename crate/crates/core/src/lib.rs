pub mod anomaly;
pub mod augmentation;
pub mod autoencoder;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
pub use matrix::EncodingMatrix;

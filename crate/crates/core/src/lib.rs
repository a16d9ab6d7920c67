//! Generative distribution prediction (GDP).
//!
//! A conditional diffusion generator is trained on `(x, y)` rows, `m` synthetic
//! responses are drawn at a query point, and a point prediction is obtained by
//! minimizing an empirical loss over that synthetic sample.
//!
//! Module map:
//! - [`nn`]: dense ReLU networks with manual backpropagation, Adam and a
//!   sinusoidal time embedding.
//! - [`gaussian`]: conditional Gaussian diffusion for continuous responses.
//! - [`discrete`]: conditional uniform-transition diffusion for categorical responses.
//! - [`predict`]: empirical-loss minimizers over a synthetic sample.
//! - [`transfer`]: source pretraining and target fine-tuning with shared embeddings.
//! - [`metrics`]: RMSE, MAD, accuracy, Cohen's kappa and 1-D Wasserstein-1.
//! - [`simbench`]: the heteroscedastic quantile-regression simulation.
//! - [`io`]: checkpoints, CSV tables and run configuration.

pub mod data;
pub mod discrete;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod predict;
pub mod rng;
pub mod simbench;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};

//! Evidence transfer for clustering.
//!
//! A stacked denoising autoencoder learns an initial latent space for a dataset; k-means on the
//! latent codes is the baseline clustering. External categorical evidence (labels produced by
//! some auxiliary task) is then encoded by small, deliberately under-trained autoencoders into
//! latent categorical targets, and the primary autoencoder is fine-tuned so that softmax heads on
//! its latent layer predict those targets while it keeps reconstructing its input. Useful
//! evidence sharpens the latent clusters; uninformative evidence cannot be fit and leaves the
//! space largely untouched.
//!
//! Modules, bottom-up: [`nn`] (dense layers, losses, optimizers), [`autoenc`], [`evidence`],
//! [`transfer`], [`cluster`] (k-means, ACC, NMI), and [`harness`] (data, experiments, files).

pub mod autoenc;
pub mod checkpoint;
pub mod cluster;
pub mod error;
pub mod evidence;
pub mod harness;
pub mod nn;
pub mod transfer;

pub use error::{Error, Result};

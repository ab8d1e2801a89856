//! Generative models under one roof — EM, VAE, GAN (standard and with a
//! generator-drift regularizer), AAE, and ALI — trained on low-dimensional
//! synthetic data through a small reverse-mode autodiff core, with the
//! divergence machinery and estimators needed to check them against each
//! other.

pub mod data;
pub mod dist;
pub mod em;
pub mod error;
pub mod exp;
pub mod gan;
pub mod metrics;
pub mod trainlog;
pub mod vae;
pub mod variants;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};

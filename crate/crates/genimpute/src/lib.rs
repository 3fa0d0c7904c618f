//! Adversarial imputation of incomplete tabular data with stochastic
//! prediction of class uncertainty.
//!
//! The pipeline has three stages:
//! 1. simulate deterministic missingness over a complete dataset
//!    ([`masking`]),
//! 2. train a generator/discriminator pair so the generator samples from
//!    the conditional distribution of missing features ([`imputer`]),
//! 3. train a classifier on freshly re-imputed samples each epoch and
//!    estimate per-instance class distributions from an ensemble of
//!    imputations ([`predictor`]).
//!
//! [`baselines`] holds the mean and denoising-autoencoder reference
//! imputers; [`data`] covers ingestion, preprocessing, and the synthetic
//! benchmark generators; [`nn`] is the small dense-network engine
//! underneath it all.

pub mod baselines;
pub mod data;
pub mod error;
pub mod imputer;
pub mod masking;
pub mod nn;
pub mod predictor;

pub use error::{Error, Result};

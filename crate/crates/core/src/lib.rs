//! Covariate-adjusted stochastic blockmodels for undirected binary networks.
//!
//! Fitting uses stochastic EM (a Gibbs E-step over class labels and a Newton
//! M-step over the log-odds parameters). Candidate block structure is then
//! checked against a uniform KL-divergence confidence bound around the
//! probabilities of a covariate-only baseline model.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common `f64` case.

pub mod confidence;
pub mod assess;
pub mod error;
pub mod inference;
pub mod matrix;
pub mod model;
pub mod netdata;
pub mod rng;
pub mod scalar;
pub mod simstudy;

pub use error::{Error, Result};
pub use inference::{fit, FitConfig, FitResult, Restriction};
pub use matrix::SymMatrix;
pub use model::{EdgeProbabilities, ModelParams, Partition};
pub use netdata::{DyadCovariates, DyadScheme, NodeCovariates, Sociomatrix, Symmetrization};
pub use scalar::Scalar;

pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type DyadCovariates64 = DyadCovariates<f64>;
pub type DyadCovariates32 = DyadCovariates<f32>;
pub type FitConfig64 = FitConfig<f64>;
pub type FitResult64 = FitResult<f64>;
pub type FitResult32 = FitResult<f32>;

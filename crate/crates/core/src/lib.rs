//! Q-posterior inference: generalized posteriors built from score equations
//! and an estimated score covariance, with an adaptive Metropolis sampler,
//! a model zoo and a seeded replication harness.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod qcore;
pub mod sampler;
pub mod scalar;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type WeightMatrix = qcore::WeightMatrix<f64>;
pub type WeightStrategy = qcore::WeightStrategy<f64>;
pub type PriorSpec = qcore::PriorSpec<f64>;
pub type ScoreEvaluation = qcore::ScoreEvaluation<f64>;
pub type Chain = sampler::Chain<f64>;
pub type ChainSummary = sampler::ChainSummary<f64>;
pub type SamplerConfig = sampler::SamplerConfig<f64>;

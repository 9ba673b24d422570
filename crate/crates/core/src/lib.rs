//! Rough Bergomi simulation with modified sum-of-exponentials (mSOE) kernel
//! approximations, Monte Carlo option pricing, and learning of the forward
//! variance curve under an empirical Wasserstein-1 loss.

pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod pricing;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;

pub use error::{Error, Result};

//! Bayesian GANs trained by stochastic-gradient Hamiltonian Monte Carlo over
//! the weights of dense generator and discriminator networks.

pub mod bayesgan;
pub mod checks;
pub mod config;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod netcore;
pub mod par;
pub mod posterior;
pub mod predict;
pub mod report;
pub mod sghmc;

pub use error::{Error, Result};

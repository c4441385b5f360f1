//! Learning distributions over optimizer hyperparameters with PAC-Bayes
//! generalization guarantees, for gradient descent and heavy-ball momentum on
//! random quadratic problems.

pub mod algorithms;
pub mod error;
pub mod experiments;
pub mod pacbayes;
pub mod prior;
pub mod problems;
pub mod risk;
pub mod seed;

pub use error::{Error, Result};

//! Streaming top-k PCA as a k-player game.
//!
//! Each approximate eigenvector is a player maximizing its own utility; the
//! unique strict-Nash equilibrium of the game is the eigenbasis. The crate
//! provides the game updates (sequential, streaming and vectorized), classic
//! streaming k-PCA baselines, a decentralized broadcast runtime, evaluation
//! metrics, and executable closed forms for the error-propagation and
//! convergence analysis.

pub mod analysis;
pub mod baselines;
pub mod dataset;
pub mod distributed;
pub mod eigengame;
pub mod error;
pub mod linalg;
pub mod metrics;

pub use error::{Error, Result};

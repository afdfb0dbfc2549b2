//! Entropy rates of hidden Markov chains.
//!
//! The crate computes finite conditional-entropy approximations H_n of a
//! hidden Markov chain, exact higher-order parameter derivatives of the
//! entropy rate at Black-Hole parameter points via derivative stabilization,
//! and, for binary Markov chains observed through a binary symmetric
//! channel, the interval structure of the limiting belief distribution
//! (support classification, cylinder approximations, rigorous entropy
//! bounds) together with a four-term decomposition of the first derivative
//! and the closed-form second derivative at crossover 1/2.
//!
//! Modules:
//! - [`hmm`]: stochastic matrices, symbol maps, belief updates, Black-Hole
//!   detection, reverse chains.
//! - [`jet`]: truncated univariate Taylor arithmetic.
//! - [`curve`]: one-parameter model families and jet-valued models.
//! - [`entropy`]: H_n, entropy-rate estimates, stabilized derivatives.
//! - [`bsc`]: the scalar iterated-function-system analysis of the binary
//!   chain through a symmetric channel.
//! - [`deriv`]: first-derivative decomposition, degenerate closed forms,
//!   low-SNR second derivative.
//! - [`comb`]: exact coefficient combinatorics behind the stabilization
//!   arguments.
//!
//! All quantities are in nats unless converted at the presentation layer.

pub mod bsc;
pub mod comb;
pub mod curve;
pub mod deriv;
pub mod entropy;
pub mod error;
pub mod hmm;
pub mod jet;

pub use error::{Error, Result};

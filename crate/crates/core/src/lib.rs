//! Perturbed learning automata with constant step size in finite
//! strategic-form games.
//!
//! The crate is `no_std` (it needs `alloc`) and covers the algorithmic side:
//!
//! - [`game`]: games with strictly positive payoffs, pure strategy states,
//!   pure Nash classification and builtin fixtures.
//! - [`dynamics`]: the perturbed reinforcement recursion (tremble-aware
//!   action sampling, strategy update, trajectories, absorption).
//! - [`chain`]: Monte Carlo estimation of the lifted chain over pure
//!   strategy states and its stationary distribution.
//! - [`occupation`]: occupation measures of the perturbed process and
//!   decreasing-perturbation sweeps compared against the lifted chain.
//! - [`stream`]: counter-based random streams keyed by (seed, domain, index).
//!
//! Parallel drivers, file formats and the command-line tool live in the
//! `lastab` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod chain;
pub mod dynamics;
mod error;
pub mod game;
pub mod occupation;
pub mod stream;

pub use error::{Error, Result};

//! Speculative price dynamics as multiplicative stochastic recurrences.
//!
//! The crate simulates the recurrence `r_t = a_t r_{t-λ} + e_t` and the
//! agent-based market it is derived from, solves the moment equation
//! `E|a|^μ = 1` for the tail exponent, checks the conditions under which the
//! Kesten, Goldie and Grincevičius results apply, and estimates tail exponents
//! from the simulated series to close the loop. Matrix-valued recurrences
//! cover the opinion-network and cross-asset extensions.

pub mod distributions;
pub mod error;
pub mod kesten;
pub mod market;
pub mod matrix;
pub mod recurrence;
pub mod rng;
pub mod scenario;
pub mod tail;

pub use distributions::{DistributionSpec, Moment, RandomLaw, TailClass};
pub use error::{Error, Result};
pub use rng::{RngState, StreamRng};
pub use tail::{TailEstimate, TailMethod};

//! Nonconventional sums `S_N = Σ F(ξ_{q₁(n)}, …, ξ_{q_ℓ(n)}) − N·F̄` over mixing processes.
//!
//! The crate generates stationary processes with exactly computable mixing
//! coefficients, evaluates the sums, builds the martingale approximation for
//! finite chains, evaluates closed-form concentration/cumulant bounds and
//! checks all of them against Monte Carlo replicates.

pub mod bounds;
pub mod config;
pub mod cumulants;
pub mod error;
pub mod indexing;
pub mod linalg;
pub mod martingale;
pub mod montecarlo;
pub mod observable;
pub mod parallel;
pub mod process;
pub mod report;
pub mod rng;
pub mod runner;
pub mod summation;
pub mod verify;

pub use error::{Error, Result};

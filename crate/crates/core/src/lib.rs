//! Chance-constrained keyword grouping for sponsored search campaigns.
//!
//! Keywords are assigned to adgroups to maximise expected profit subject to
//! per-adgroup budget chance constraints and a profit-variance risk limit.
//! The exact solver is a best-first branch and bound over second-order-cone
//! relaxations; five baseline grouping strategies are provided for comparison.

pub mod baselines;
pub mod bnb;
pub mod chance;
pub mod data;
pub mod error;
pub mod harness;
pub mod model;
pub mod normal;
pub mod relaxation;
pub mod strategy;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};

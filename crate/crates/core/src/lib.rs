//! Pricing and rebalancing game between two ride-service providers on a
//! time-expanded network, solved through concave quadratic programs.

#![allow(clippy::needless_range_loop)]

pub mod demand;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod fixtures;
pub mod network;
pub mod programs;
pub mod qp;

pub use error::{Error, Result, Violation};

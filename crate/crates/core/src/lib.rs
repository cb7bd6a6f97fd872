//! Equilibrium solvers for a non-atomic congestion game in which an ISP
//! rewards users for moving traffic out of the peak period, either with a
//! fixed-budget rebate (FBR) shared in proportion to each user's reduction or
//! with time-of-day pricing (TDP) at a constant unit reward.

mod error;
pub use error::{Error, Result};

pub mod population;
mod roots;
pub mod model;
pub mod mechanism;
pub mod equilibrium;
pub mod design;
pub mod robustness;
pub mod lottery;
pub mod scenario;

#[cfg(test)]
mod fixtures;

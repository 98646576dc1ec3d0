//! Battery and flexible-demand co-optimization for a prosumer under net energy metering
//! with a demand charge.
//!
//! The crate is organized as:
//! - [`model`]: battery dynamics, tariff, utility and the per-step reward;
//! - [`generation`]: Markov-chain generation model, fitting and synthetic series;
//! - [`dp`]: backward induction on (SoC, generation level, peak) grids and structural checks;
//! - [`oracle`]: perfect-foresight benchmark for a known generation path;
//! - [`policies`]: backup, threshold, myopic and DP policies;
//! - [`sim`]: rollouts, scenario construction and comparison reports.

pub mod dp;
pub mod error;
pub mod generation;
pub mod model;
pub mod oracle;
pub mod policies;
pub mod sim;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use error::{Bound, Error, Result};

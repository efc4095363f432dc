//! Grid-world UAV swarm target search.
//!
//! A swarm of drones explores an obstacle-laden square grid looking for
//! static targets. The crate provides the simulation environment, a
//! per-agent knowledge model with windowed observations, a lossy broadcast
//! channel, a from-scratch convolutional Q-network with distributed
//! deep-Q-learning training, an exhaustive look-ahead baseline policy,
//! and a Monte Carlo evaluation harness.

// Validation guards are written `!(x >= lo)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comms;
pub mod coord;
pub mod ddql;
pub mod env;
pub mod episode;
pub mod error;
pub mod harness;
pub mod knowledge;
pub mod lookahead;
pub mod map;
pub mod nn;
pub mod rng;

pub use coord::{Action, Coord};
pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

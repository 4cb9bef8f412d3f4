//! Numerical laboratory for the Anderson model on the Bethe lattice.
//!
//! The modules follow the data flow: [`disorder`] and [`rng`] supply random
//! input, [`exact`] holds the free-tree closed forms used as oracles,
//! [`cavity`] runs population dynamics on the infinite tree, [`graphs`] builds
//! and diagonalizes finite graphs, [`stats`] analyses their spectra, and
//! [`phase`] turns cavity estimates into phase labels. [`report`] writes the
//! CSV and JSON outputs.

pub mod cavity;
pub mod disorder;
pub mod error;
pub mod exact;
pub mod graphs;
pub mod numeric;
pub mod phase;
pub mod report;
pub mod rng;
pub mod stats;

#[cfg(doctest)]
mod guide;

pub use error::{Error, Result};

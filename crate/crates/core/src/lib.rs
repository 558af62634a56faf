//! Simulation and analysis of the (N, a)-exponential branching-selection
//! model, its genealogy, the limiting Λ-coalescents, and branching
//! Ornstein–Uhlenbeck particles with selection.

pub mod analysis;
pub mod coalescent;
pub mod error;
pub mod genealogy;
pub mod model;
pub mod ou;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rng::RngStream;

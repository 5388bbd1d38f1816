//! Proportional-allocation algorithms for the bipartite allocation problem on
//! uniformly sparse graphs.
//!
//! The crate is organized around the pipeline:
//!
//! - [`graph`]: instances, allocations, feasibility validators and the text format.
//! - [`generate`]: seeded instance generators with arboricity known by construction.
//! - [`local`]: the exact proportional-allocation iteration, with per-vertex
//!   threshold schedules, level sets and the arboricity-free stopping rule.
//! - [`mpc`]: the sampled, phase-compressed simulation with an analytic cost model.
//! - [`rounding`]: randomized rounding to integral allocations.
//! - [`oracle`]: exact optima (max-flow and brute force).
//! - [`boost`]: layered-graph augmentation toward a (1+ε)-approximate allocation.
//! - [`experiment`]: experiment runner, sweeps and report emission.

pub mod boost;
pub mod error;
pub mod experiment;
pub mod generate;
pub mod graph;
pub mod local;
pub mod mpc;
pub mod oracle;
pub mod rng;
pub mod rounding;
pub mod sum;

pub use error::{Error, Result};
pub use graph::{AllocationInstance, FractionalAllocation, IntegralAllocation};
pub use rng::SimRng;

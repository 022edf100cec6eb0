//! Behavioral (pseudo-)metrics on finite Markov decision processes.
//!
//! The crate covers discrete bisimulation relations, bisimulation / lax / pi-bisimulation
//! metrics computed with an exact optimal-transport kernel, value-difference metrics,
//! Lipschitz and dominance audits, and the Garnet and four-rooms experiments built on them.

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mdp;
pub mod metrics;
pub mod rng;
pub mod solvers;
pub mod transport;

pub use error::{Error, Result};
pub use mdp::{FiniteMdp, Policy};
pub use metrics::{MetricKind, Partition, StateMetric};
pub use solvers::ValueFunctions;

//! Numerical laboratory for Neumann sieves and their non-local interface
//! limits.
//!
//! The pipeline runs from an interface kernel and a box domain through the
//! sieve plan, meshes and finite element forms to linear and spectral
//! solvers, and finally to convergence sweeps over `eps`.

pub mod assembly;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kernel;
pub mod mesh;
pub mod report;
pub mod semigroup;
pub mod solvers;
pub mod sparse;

pub use config::{parse_config, RunConfig};
pub use error::{Result, SieveError};

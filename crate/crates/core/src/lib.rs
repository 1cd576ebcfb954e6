//! Simulation and analysis of quench dynamics in the two-dimensional Rydberg
//! Ising model on a square lattice.

pub mod error;
pub mod evolve;
pub mod fitting;
pub mod lattice;
pub mod model;
pub mod nlce;
pub mod observables;

pub use error::{Error, Result};

//! Rare-event statistics for stochastic dynamical systems.
//!
//! Three independent routes to the same numbers: direct simulation
//! ([`sde`], [`ssa`]), asymptotic formulas ([`sde::kramers_mte`], [`wkb`]),
//! and optimal-path solvers ([`path`]). [`sampling`] closes the loop by
//! using computed paths to bias Monte Carlo.

pub mod cli;
pub mod config;
pub mod error;
pub mod figures;
pub mod hamiltonian;
pub mod io;
pub mod linalg;
pub mod model;
pub mod path;
pub mod quadrature;
pub mod sampling;
pub mod sde;
pub mod ssa;
pub mod stats;
pub mod wkb;

pub use error::{Error, Result};

//! Lattice simulator and diagnostics for the gauge-invariant Ginzburg-Landau
//! energy on Hermitian line bundles over flat periodic tori.

pub mod bundle;
pub mod energy;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod observables;
pub mod solver;

pub use error::{GlbError, Result};

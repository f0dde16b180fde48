//! Interior-point topology optimization of the variable thickness sheet
//! problem, with Newton systems solved by a non-overlapping
//! Dirichlet-Dirichlet domain decomposition and constraint interface
//! preconditioners built on discrete fractional Sobolev norms.

pub mod checks;
pub mod error;
pub mod fem;
pub mod harness;
pub mod interface;
pub mod ip;
pub mod krylov;
pub mod mesh;
pub mod newton;
pub mod schur;
pub mod sparse;

pub use error::{Error, Result};

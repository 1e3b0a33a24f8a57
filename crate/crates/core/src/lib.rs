//! Linearized Bregman solvers for augmented ℓ1 and nuclear-norm recovery,
//! with exact-recovery, stability and convergence certificates.

pub mod error;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod solvers;
pub mod certificates;
pub mod harness;
pub mod io;

pub use error::{Error, Result};

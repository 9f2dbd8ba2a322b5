//! Risk-sensitive coherent quantum controller synthesis.

pub mod cascade;
pub mod error;
pub mod freq;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod quadrature;
pub mod scalar;
pub mod synthesis;
pub mod system;
pub mod variational;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use scalar::Real;

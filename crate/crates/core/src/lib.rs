//! Quasi-conforming embedded reproducing kernel particle method for linear
//! elasticity with material inclusions in one and two dimensions.

pub mod error;
pub mod geometry;
pub mod quadrature;
pub mod rk;
pub mod discretize;
pub mod integration;
pub mod assembly;
pub mod krylov;
pub mod bench;

pub use error::{QceError, Result};

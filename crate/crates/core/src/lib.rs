//! Sparse estimation with the `T_K` exact penalty: losses, the penalty and
//! its proximal machinery, stationarity certificates, and solvers.

pub mod data;
pub mod error;
pub mod linalg;
pub mod objective;
pub mod penalty;
pub mod solvers;
pub mod stationarity;

pub use error::{Error, Result};

//! Discrete laboratory for backward SPDEs with random coefficients, their
//! forward duals, and Monte Carlo estimates of the functionals they
//! represent.

pub mod backward;
pub mod coefficients;
pub mod error;
pub mod field;
pub mod forward;
pub mod grid;
pub mod model;
pub mod montecarlo;
pub mod pairing;
pub mod paths;
pub mod probe;
pub mod tree;
pub mod tridiag;

pub use error::{Error, Result};

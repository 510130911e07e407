pub mod bath;
pub mod circuit;
pub mod config;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod propagator;
pub mod pulses;
pub mod quadrature;
pub mod special;
pub mod tridiag;

pub use error::{Error, Result};

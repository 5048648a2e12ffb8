//! Planning, registration, cut-trace simulation and scoring for guided liver
//! resection studies.

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod planning;
pub mod registration;
pub mod rng;
pub mod service;
pub mod sim;
pub mod stats;
pub mod study;

pub use error::{Error, Result};

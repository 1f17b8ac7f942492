//! Hybrid attention transformer for image restoration, with local
//! attribution analysis, a complexity profiler, data synthesis and training.

pub mod attention;
pub mod attribution;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod model;
pub mod registry;
pub mod training;

pub use error::{Error, Result};

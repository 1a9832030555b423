pub mod cli;
pub mod error;
pub mod metrics;
pub mod numerics;
pub mod patches;
pub mod reservoir;
pub mod topology;
pub mod training;

pub use error::{Error, Result};

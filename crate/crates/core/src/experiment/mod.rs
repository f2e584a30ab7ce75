//! Configuration loading, parameter sweeps and result files.

mod config;
mod sweep;

pub use config::*;
pub use sweep::*;

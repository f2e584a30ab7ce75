//! Dual-baseline UAV-InSAR performance model with a formation and
//! communication-power optimizer.
//!
//! A master UAV flies on the line of sight at a fixed look angle; two slaves
//! form the interferometric baselines. [`optimizer`] minimizes the worst-case
//! fused height error subject to geometric, radar and link constraints.

pub mod benchmarks;
pub mod comm;
pub mod convex;
pub mod experiment;
pub mod geometry;
pub mod metrics;
pub mod optimizer;
pub mod problem;
pub mod validation;

pub use benchmarks::{SchemeId, SchemeResult};
pub use experiment::ExperimentConfig;
pub use geometry::Position;
pub use problem::Scenario;

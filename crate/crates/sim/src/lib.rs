//! Synthetic malls, simulated check-ins and trace replay for `lbsn-core`.

pub mod config;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod replay;
pub mod trace;
pub mod world;

pub use config::{NoiseModel, SimConfig};
pub use error::{SimError, SimResult};
pub use metrics::{Format, MetricsReport};
pub use replay::{replay, ReplayInput, ReplayOutput};
pub use trace::{simulate_checkins, Trace, TraceRecord};
pub use world::{generate_mall, GroundTruth, Mall};

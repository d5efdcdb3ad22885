//! The end-to-end benchmark: classifier draw, distribution hiding, the
//! correction-pool size sweep, per-query correction and per-cutoff scoring.

pub mod config;
pub mod report;
pub mod runner;
pub mod sampling;
pub mod synthetic;
pub mod timing;

pub use config::{Bandwidth, DataSource, Method, PoolSize, ProtocolConfig};
pub use report::{FairnessReport, Metric, PoolReport, QueryRecord};
pub use runner::{derive_seed, run_protocol, run_protocol_with_classifier, Classifier, ProtocolData};
pub use sampling::{draw_per_group, undersample_pool};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use timing::{measure_timings, TimingSummary, TimingWorkload};

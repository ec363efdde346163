//! Experiment plumbing: configuration files, multi-run training with CSV
//! logging and checkpoints, summaries, protocol reports and plots.

pub mod checkpoint;
pub mod config;
pub mod plot;
pub mod protocol;
pub mod runner;
pub mod summary;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::ExperimentConfig;
pub use protocol::{ProtocolOptions, ProtocolReport, protocol_report};
pub use runner::{ExperimentOutput, RunOptions, run_experiment};
pub use summary::{MetricRow, RunSummary, Stats};

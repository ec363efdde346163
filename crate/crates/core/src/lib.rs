//! Contextual Lewis signaling game laboratory.
//!
//! Neural sender/receiver pairs play a discrimination game in which the
//! receiver may only pick among the objects of the current context. The
//! pair is trained with mirrored-sampling evolution strategies on accuracy
//! minus a vocabulary-size penalty, and every batch can be summarized with
//! plug-in information measures of how much the protocol leans on context.

pub mod agents;
pub mod error;
pub mod es;
pub mod evaluator;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod world;

pub use agents::{AgentSpec, Agents, SenderKind, SignalVec};
pub use error::{Error, Result};
pub use es::{EpisodeBudget, EsConfig, FitnessShaping, RunSetup, Trainer};
pub use evaluator::{BatchResult, EpisodeLog, EpisodeRunner};
pub use experiment::ExperimentConfig;
pub use metrics::MetricRecord;
pub use nn::Init;
pub use world::{World, WorldSpec};

//! Replayable multi-agent social-exchange simulator.
//!
//! Agents holding specialized resources negotiate non-binding trades, then
//! privately decide what to actually send. Holdings are scored by how many
//! complete sets of distinct resources they contain. Every run is an
//! append-only event log that can be replayed and analysed.

pub mod analysis;
pub mod domain;
pub mod exchange;
pub mod ledger;
pub mod llm;
pub mod negotiation;
pub mod orchestrator;
pub mod policies;
pub mod scoring;
pub mod session;

pub use domain::{AgentId, ExperimentConfig, ResourceVector};

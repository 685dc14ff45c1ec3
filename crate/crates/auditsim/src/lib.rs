//! Deterministic discrete-event simulator of a peer-to-peer audit-and-repair
//! protocol with admission-control defenses, plus the attrition adversaries
//! and metrics used to evaluate them.

pub mod admission;
pub mod adversary;
pub mod config;
pub mod content;
pub mod experiment;
pub mod metrics;
pub mod effort;
pub mod engine;
pub mod network;
pub mod protocol;
pub mod schedule;
pub mod sim;
pub mod types;

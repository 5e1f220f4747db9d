//! Collaborative detection network: agents report logged queries through a
//! pub/sub broker to analyzers, and attack verdicts come back as IP blocks
//! for every agent.

mod blocklist;
mod harness;
mod net;
mod node;
mod router;
pub mod wire;

pub use blocklist::{BlockEntry, Blocklist};
pub use harness::{Delivery, LocalNetwork};
pub use net::{
    agent_run, analyzer_run, broker_serve, connect_with_backoff, tail_log, Backoff, LogSource,
    NodeConfig, BACKOFF_CAP,
};
pub use node::{uuid_ids, AgentCore, AgentStats, AnalyzerCore, Classification, IdSource};
pub use router::{NodeId, Outbound, Routed, Router};
pub use wire::{Role, WireMessage, MAX_LINE};

//! Machines, word budgets, synchronous rounds and telemetry.
//!
//! Slot 0 is the large machine; slots `1..=K` are the small machines. Every
//! algorithm in this crate talks to other machines only through
//! [`Cluster::run_round`].

mod cluster;
mod config;
mod placement;
mod record;
mod telemetry;

pub use cluster::{substream_seed, Cluster, Ctx, MachineId, Message, Outbox};
pub(crate) use cluster::mix;
pub use config::{ceil_log2, floor_log2, ClusterConfig, Mode, Ratio};
pub use placement::{balanced_ranges, distribute_edges, Placement};
pub use record::{decode_all, encode_all, words_of, Record};
pub use telemetry::{
    MachineTraffic, RoundExport, RoundTelemetry, RunReport, TrafficSummary, Violation,
    ViolationKind,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("budget violation in round {round}: {machine} {kind} load {used} exceeds {budget} words")]
    Budget {
        round: usize,
        machine: MachineId,
        kind: ViolationKind,
        used: usize,
        budget: usize,
    },
    #[error("capacity exceeded: {what} needs {needed} words, {available} available")]
    Capacity {
        what: String,
        needed: usize,
        available: usize,
    },
    #[error("malformed payload: {0}")]
    Decode(String),
}

/// Initializes a cluster; the named entry point for the model's setup step.
pub fn init_cluster(config: ClusterConfig) -> Result<Cluster, SimError> {
    Cluster::new(config)
}

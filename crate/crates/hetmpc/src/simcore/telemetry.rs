use serde::{Deserialize, Serialize};

use super::MachineId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    SendBudget,
    RecvBudget,
    StateBudget,
}

impl std::fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ViolationKind::SendBudget => "send",
            ViolationKind::RecvBudget => "receive",
            ViolationKind::StateBudget => "state",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub machine: MachineId,
    pub kind: ViolationKind,
    pub used: usize,
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineTraffic {
    pub machine: MachineId,
    pub sent: usize,
    pub received: usize,
    pub resident: usize,
}

/// Word counts for one round, indexed by machine slot (slot 0 is the large machine).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundTelemetry {
    pub round: usize,
    pub label: String,
    pub sent: Vec<usize>,
    pub received: Vec<usize>,
    pub resident: Vec<usize>,
    pub violations: Vec<Violation>,
}

impl RoundTelemetry {
    pub fn total_sent(&self) -> usize {
        self.sent.iter().sum()
    }

    pub fn total_received(&self) -> usize {
        self.received.iter().sum()
    }

    pub fn machine(&self, id: MachineId) -> MachineTraffic {
        let s = id.slot();
        MachineTraffic {
            machine: id,
            sent: self.sent[s],
            received: self.received[s],
            resident: self.resident[s],
        }
    }

    /// Machines with any nonzero counter, for compact export.
    pub fn active(&self) -> Vec<MachineTraffic> {
        (0..self.sent.len())
            .filter(|&s| self.sent[s] + self.received[s] + self.resident[s] > 0)
            .map(|s| self.machine(MachineId::from_slot(s)))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundExport {
    pub round: usize,
    pub label: String,
    pub machines: Vec<MachineTraffic>,
    pub violations: Vec<Violation>,
}

/// Telemetry document for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub rounds_used: usize,
    pub seed: u64,
    pub small_machines: usize,
    pub small_budget: usize,
    pub large_budget: usize,
    pub rounds: Vec<RoundExport>,
    pub violations: Vec<Violation>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("telemetry serializes")
    }
}

/// Aggregate numbers suitable for a one-line summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TrafficSummary {
    pub rounds_used: usize,
    pub total_words: usize,
    pub max_large_received: usize,
    pub max_small_sent: usize,
    pub max_small_received: usize,
    pub violations: usize,
}

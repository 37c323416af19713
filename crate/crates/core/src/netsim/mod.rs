//! Packet-level dumbbell simulator and its measurements.

mod scenario;
mod sim;

use serde::{Deserialize, Serialize};

pub use scenario::{
    bdp_packets, standard_matrix, GroupId, ScenarioError, ScenarioSpec, DEFAULT_DURATION_S, DEFAULT_WARMUP_S,
    LONG_RTT_MS, R1_COMPETING_FLOWS, R3_RANDOM_LOSS, SHORT_RTT_MS,
};
pub use sim::{simulate, wilson_upper, SimCounters, SimOutput, LOSS_WINDOW_NS};

use crate::cca::{BaseCca, ControlProfile};

/// A flow under test: a base algorithm or a customized one.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowSpec {
    Base(BaseCca),
    Custom(ControlProfile),
}

impl FlowSpec {
    pub fn base_cca(&self) -> BaseCca {
        match self {
            FlowSpec::Base(b) => *b,
            FlowSpec::Custom(p) => p.base_cca,
        }
    }
}

/// Measurements of one flow over `[warmup, duration)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowStats {
    /// Receiver goodput.
    pub mean_throughput_mbps: f64,
    /// Packets dropped on the path over packets transmitted.
    pub loss_rate: f64,
    /// New payload bytes delivered.
    pub delivered_bytes: u64,
    pub rtt_mean_ms: f64,
}

/// Per-flow stats for `flows`, in input order. Competing flows named by the
/// scenario run alongside but are not reported.
pub fn run_scenario(scenario: &ScenarioSpec, flows: &[FlowSpec]) -> Vec<FlowStats> {
    let mut out = simulate(scenario, flows).flows;
    out.truncate(flows.len());
    out
}

/// `(sum x)^2 / (n * sum x^2)`; 1 for an empty or all-zero allocation.
pub fn jain_index(xs: &[f64]) -> f64 {
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if xs.is_empty() || sq == 0.0 {
        return 1.0;
    }
    sum * sum / (xs.len() as f64 * sq)
}

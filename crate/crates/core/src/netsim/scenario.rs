use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cca::{BaseCca, DEFAULT_MSS};
use crate::requirements::{HomeNetwork, RequirementSet};

pub const SHORT_RTT_MS: f64 = 20.0;
pub const LONG_RTT_MS: f64 = 100.0;
pub const DEFAULT_DURATION_S: f64 = 30.0;
pub const DEFAULT_WARMUP_S: f64 = 5.0;
/// Competing flows in the congested (R1) scenarios.
pub const R1_COMPETING_FLOWS: u32 = 4;
/// Random loss in the persistent-loss (R3) scenarios.
pub const R3_RANDOM_LOSS: f64 = 0.06;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("malformed scenario record: {0}")]
    Parse(String),
}

/// Requirement group a scenario belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupId {
    R1,
    R2,
    R3,
}

impl GroupId {
    pub const ALL: [GroupId; 3] = [GroupId::R1, GroupId::R2, GroupId::R3];

    pub fn as_str(self) -> &'static str {
        match self {
            GroupId::R1 => "R1",
            GroupId::R2 => "R2",
            GroupId::R3 => "R3",
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GroupId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "R1" => Ok(GroupId::R1),
            "R2" => Ok(GroupId::R2),
            "R3" => Ok(GroupId::R3),
            other => Err(ScenarioError::Parse(format!("unknown group `{other}`"))),
        }
    }
}

/// One dumbbell experiment: every flow shares a single droptail bottleneck.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub bottleneck_mbps: f64,
    /// Two-way propagation delay.
    pub rtt_ms: f64,
    /// Droptail buffer, packets.
    pub queue_capacity: u32,
    pub competing_flows: u32,
    #[serde(default = "default_competing_cca")]
    pub competing_cca: BaseCca,
    /// i.i.d. per-packet drop probability at the bottleneck.
    pub random_loss_rate: f64,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seed: u64,
}

fn default_competing_cca() -> BaseCca {
    BaseCca::Cubic
}

impl ScenarioSpec {
    /// Idle link with a one-BDP buffer, 30 s with 5 s warmup.
    pub fn new(bottleneck_mbps: f64, rtt_ms: f64) -> Self {
        ScenarioSpec {
            bottleneck_mbps,
            rtt_ms,
            queue_capacity: bdp_packets(bottleneck_mbps, rtt_ms),
            competing_flows: 0,
            competing_cca: BaseCca::Cubic,
            random_loss_rate: 0.0,
            duration_s: DEFAULT_DURATION_S,
            warmup_s: DEFAULT_WARMUP_S,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_competing(mut self, flows: u32, cca: BaseCca) -> Self {
        self.competing_flows = flows;
        self.competing_cca = cca;
        self
    }

    pub fn with_random_loss(mut self, rate: f64) -> Self {
        self.random_loss_rate = rate;
        self
    }

    pub fn with_timing(mut self, duration_s: f64, warmup_s: f64) -> Self {
        self.duration_s = duration_s;
        self.warmup_s = warmup_s;
        self
    }

    pub fn measurement_window_s(&self) -> f64 {
        (self.duration_s - self.warmup_s).max(0.0)
    }

    /// `duration == warmup` is accepted and yields an empty measurement
    /// window.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.bottleneck_mbps.is_finite() && self.bottleneck_mbps > 0.0) {
            return bad(format!("bottleneck rate must be positive, got {}", self.bottleneck_mbps));
        }
        if !(self.rtt_ms.is_finite() && self.rtt_ms > 0.0) {
            return bad(format!("rtt must be positive, got {}", self.rtt_ms));
        }
        if self.queue_capacity < 1 {
            return bad("queue capacity must be at least one packet".into());
        }
        if !(0.0..1.0).contains(&self.random_loss_rate) {
            return bad(format!("random loss rate must be in [0, 1), got {}", self.random_loss_rate));
        }
        if !(self.warmup_s >= 0.0 && self.duration_s.is_finite() && self.duration_s >= self.warmup_s) {
            return bad(format!("need duration >= warmup >= 0, got {} and {}", self.duration_s, self.warmup_s));
        }
        Ok(())
    }

    pub fn to_record(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn from_record(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.message().to_string()))
    }
}

/// Packets in one bandwidth-delay product, at least one.
pub fn bdp_packets(rate_mbps: f64, rtt_ms: f64) -> u32 {
    let bits = rate_mbps * 1e6 * rtt_ms / 1e3;
    ((bits / (DEFAULT_MSS as f64 * 8.0)).ceil() as u32).max(1)
}

/// Six scenarios on the user's uplink: per group a 20 ms and a 100 ms
/// variant. R1 adds competing Cubic flows, R3 adds persistent random loss.
pub fn standard_matrix(_reqs: &RequirementSet, net: &HomeNetwork) -> Vec<(GroupId, ScenarioSpec)> {
    let link = net.upload_speed_mbps;
    let mut out = Vec::with_capacity(6);
    for group in GroupId::ALL {
        for rtt in [SHORT_RTT_MS, LONG_RTT_MS] {
            let base = ScenarioSpec::new(link, rtt);
            let spec = match group {
                GroupId::R1 => base.with_competing(R1_COMPETING_FLOWS, BaseCca::Cubic),
                GroupId::R2 => base,
                GroupId::R3 => base.with_random_loss(R3_RANDOM_LOSS),
            };
            out.push((group, spec));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_shape() {
        let reqs = RequirementSet::new(16.0, 30.0, 0.05).unwrap();
        let m = standard_matrix(&reqs, &HomeNetwork::new(60.0).unwrap());
        assert_eq!(m.len(), 6);
        for group in GroupId::ALL {
            let rtts: Vec<f64> = m.iter().filter(|(g, _)| *g == group).map(|(_, s)| s.rtt_ms).collect();
            assert_eq!(rtts, vec![20.0, 100.0]);
        }
        for (g, s) in &m {
            assert_eq!(s.bottleneck_mbps, 60.0);
            assert_eq!(s.competing_flows, if *g == GroupId::R1 { 4 } else { 0 });
            assert_eq!(s.random_loss_rate > 0.05, *g == GroupId::R3);
            assert!(s.validate().is_ok());
        }
    }

    #[test]
    fn bdp_rounding() {
        // 10 Mbps * 20 ms = 200 kbit = 16.7 packets
        assert_eq!(bdp_packets(10.0, 20.0), 17);
        assert_eq!(bdp_packets(0.001, 1.0), 1);
    }

    #[test]
    fn record_round_trip() {
        let s = ScenarioSpec::new(60.0, 50.0).with_competing(2, BaseCca::Reno).with_seed(9);
        assert_eq!(ScenarioSpec::from_record(&s.to_record()).unwrap(), s);
    }

    #[test]
    fn validation() {
        assert!(ScenarioSpec::new(0.0, 20.0).validate().is_err());
        assert!(ScenarioSpec::new(10.0, 20.0).with_random_loss(1.0).validate().is_err());
        assert!(ScenarioSpec::new(10.0, 20.0).with_timing(5.0, 6.0).validate().is_err());
        assert!(ScenarioSpec::new(10.0, 20.0).with_timing(5.0, 5.0).validate().is_ok());
    }
}

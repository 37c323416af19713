use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::BaseCca;
use crate::requirements::RequirementSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("malformed control profile: {0}")]
    Parse(String),
    #[error("control profile violates constraint: {0}")]
    Constraint(String),
    #[error("unknown fault flag `{0}`")]
    UnknownFault(String),
}

/// Defects that can be injected into a candidate for exercising the
/// evaluation and repair paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultFlag {
    CompileFault,
    BpfFault,
    R1Fault,
    R2Fault,
    R3Fault,
}

impl FaultFlag {
    pub const ALL: [FaultFlag; 5] =
        [FaultFlag::CompileFault, FaultFlag::BpfFault, FaultFlag::R1Fault, FaultFlag::R2Fault, FaultFlag::R3Fault];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultFlag::CompileFault => "COMPILE_FAULT",
            FaultFlag::BpfFault => "BPF_FAULT",
            FaultFlag::R1Fault => "R1_FAULT",
            FaultFlag::R2Fault => "R2_FAULT",
            FaultFlag::R3Fault => "R3_FAULT",
        }
    }
}

impl fmt::Display for FaultFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultFlag {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        FaultFlag::ALL
            .into_iter()
            .find(|f| f.as_str() == upper || f.as_str().trim_end_matches("_FAULT") == upper)
            .ok_or_else(|| ProfileError::UnknownFault(s.trim().to_string()))
    }
}

pub type FaultSet = BTreeSet<FaultFlag>;

/// Machine-evaluable customization of a base algorithm.
///
/// Serialized as one `key = value` pair per line:
///
/// ```text
/// base_cca = "CUBIC"
/// min_rate_mbps = 16.0
/// max_rate_mbps = 30.0
/// loss_threshold = 0.05
/// boost_gain = 1.2
/// cap_margin = 1.0
/// fault_flags = []
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlProfile {
    pub base_cca: BaseCca,
    /// R1 floor, Mbps.
    pub min_rate_mbps: f64,
    /// R2 cap, Mbps.
    pub max_rate_mbps: f64,
    /// R3 threshold.
    pub loss_threshold: f64,
    /// Multiplier on the R1 window floor.
    pub boost_gain: f64,
    /// Fraction of `max_rate_mbps` the cap actually enforces.
    #[serde(default = "default_cap_margin")]
    pub cap_margin: f64,
    #[serde(default)]
    pub fault_flags: FaultSet,
}

fn default_cap_margin() -> f64 {
    1.0
}

impl ControlProfile {
    pub fn from_requirements(base_cca: BaseCca, reqs: &RequirementSet, boost_gain: f64) -> Self {
        ControlProfile {
            base_cca,
            min_rate_mbps: reqs.r1_min_throughput_mbps,
            max_rate_mbps: reqs.r2_max_throughput_mbps,
            loss_threshold: reqs.r3_loss_threshold,
            boost_gain,
            cap_margin: 1.0,
            fault_flags: FaultSet::new(),
        }
    }

    pub fn has_fault(&self, flag: FaultFlag) -> bool {
        self.fault_flags.contains(&flag)
    }

    pub fn with_faults(mut self, faults: impl IntoIterator<Item = FaultFlag>) -> Self {
        self.fault_flags.extend(faults);
        self
    }

    /// Effective cap in Mbps.
    pub fn cap_mbps(&self) -> f64 {
        self.max_rate_mbps * self.cap_margin
    }

    /// Checks the static constraints a verifier-style check enforces.
    pub fn validate(&self) -> Result<(), ProfileError> {
        let finite_positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ProfileError::Constraint(format!("{name} must be finite and positive, got {v}")))
            }
        };
        finite_positive("min_rate_mbps", self.min_rate_mbps)?;
        finite_positive("max_rate_mbps", self.max_rate_mbps)?;
        if self.min_rate_mbps > self.max_rate_mbps {
            return Err(ProfileError::Constraint(format!(
                "min_rate_mbps {} exceeds max_rate_mbps {}",
                self.min_rate_mbps, self.max_rate_mbps
            )));
        }
        if !(self.loss_threshold > 0.0 && self.loss_threshold < 1.0) {
            return Err(ProfileError::Constraint(format!(
                "loss_threshold must be in (0, 1), got {}",
                self.loss_threshold
            )));
        }
        if !(self.boost_gain.is_finite() && self.boost_gain >= 1.0) {
            return Err(ProfileError::Constraint(format!("boost_gain must be >= 1, got {}", self.boost_gain)));
        }
        if !(self.cap_margin > 0.0 && self.cap_margin <= 1.0) {
            return Err(ProfileError::Constraint(format!("cap_margin must be in (0, 1], got {}", self.cap_margin)));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("control profile serializes")
    }

    /// Parses the key-value form. Values are not range-checked; see
    /// [`ControlProfile::validate`].
    pub fn from_text(text: &str) -> Result<Self, ProfileError> {
        toml::from_str(text).map_err(|e| ProfileError::Parse(e.message().to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> ControlProfile {
        let reqs = RequirementSet::new(16.0, 30.0, 0.05).unwrap();
        ControlProfile::from_requirements(BaseCca::Cubic, &reqs, 1.0)
    }

    #[test]
    fn text_form_has_one_key_per_line() {
        let p = profile().with_faults([FaultFlag::R1Fault, FaultFlag::CompileFault]);
        let text = p.to_text();
        for key in ["base_cca", "min_rate_mbps", "max_rate_mbps", "loss_threshold", "boost_gain", "fault_flags"] {
            assert_eq!(text.lines().filter(|l| l.starts_with(&format!("{key} = "))).count(), 1, "{key}\n{text}");
        }
        assert!(text.contains(r#"fault_flags = ["COMPILE_FAULT", "R1_FAULT"]"#), "{text}");
        assert_eq!(ControlProfile::from_text(&text).unwrap(), p);
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(ControlProfile::from_text("base_cca = \"BBR\""), Err(ProfileError::Parse(_))));
        assert!(ControlProfile::from_text("not a profile").is_err());
    }

    #[test]
    fn constraints() {
        assert!(profile().validate().is_ok());
        let mut p = profile();
        p.min_rate_mbps = 0.0;
        assert!(p.validate().is_err());
        let mut p = profile();
        p.loss_threshold = 1.0;
        assert!(p.validate().is_err());
        let mut p = profile();
        p.boost_gain = 0.9;
        assert!(p.validate().is_err());
        let mut p = profile();
        p.max_rate_mbps = f64::INFINITY;
        assert!(p.validate().is_err());
    }

    #[test]
    fn fault_names_parse() {
        assert_eq!("compile_fault".parse::<FaultFlag>().unwrap(), FaultFlag::CompileFault);
        assert_eq!("R1".parse::<FaultFlag>().unwrap(), FaultFlag::R1Fault);
        assert!("nope".parse::<FaultFlag>().is_err());
    }
}

//! Implementation prompts.
//!
//! A rendered prompt is a sequence of `## `-headed sections:
//!
//! ```text
//! ## INSTRUCTION
//! ## CCA DESIGN
//! ## BASE CCA SOURCE: <file>
//! ## REFERENCE: <name>        (one per snippet)
//! ## OUTPUT FORMAT
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cca::{base_source, base_source_file_name, BaseCca, CcaError, ControlProfile, PROFILE_BEGIN, PROFILE_END};
use crate::evaluator::EvalReport;
use crate::refinery::RefinerConfig;
use crate::requirements::RequirementSet;

pub const INSTRUCTION_HEADER: &str = "## INSTRUCTION";
pub const DESIGN_HEADER: &str = "## CCA DESIGN";
pub const SOURCE_HEADER: &str = "## BASE CCA SOURCE";
pub const REFERENCE_HEADER: &str = "## REFERENCE";
pub const OUTPUT_HEADER: &str = "## OUTPUT FORMAT";

const TASK_STATEMENT: &str = "\
You are given a Linux TCP congestion control algorithm written as a BPF struct_ops program. \
Revise the program so that it satisfies every requirement listed under CCA DESIGN. Outside of \
what the requirements demand, the revised program must behave like the base algorithm.";

/// The five domain guidelines of chain-of-thought mode, in order.
pub const GUIDELINES: [&str; 5] = [
    "Guideline 1 (compile): the revised program must compile with clang for the bpf target. \
     Declare every variable before use, terminate every statement, and use only the types, \
     fields and helpers shown in the REFERENCE sections.",
    "Guideline 2 (attach): the program must pass the BPF verifier and attach through \
     struct_ops. Keep loops bounded, test pointers returned by helpers before dereferencing \
     them, keep private state within the 104-byte icsk_ca_priv area or move it to socket \
     storage, and keep the SEC annotations and the .struct_ops map intact.",
    "Guideline 3 (functions): change the callbacks that decide throughput. The callbacks run \
     at very different rates: init and release once per connection, ssthresh and undo_cwnd \
     only around losses, while cong_avoid (or cong_control) and pkts_acked run on every \
     incoming acknowledgment. Rate floors, caps and loss bookkeeping belong in the \
     per-acknowledgment path.",
    "Guideline 4 (variables): adjust the variable this algorithm actually uses to set its \
     sending rate. Window based algorithms act through snd_cwnd together with snd_ssthresh; \
     algorithms that pace their transmissions also set sk_pacing_rate. Writing a variable the \
     base algorithm never consults has no effect on throughput.",
    "Guideline 5 (units): convert units explicitly. snd_cwnd counts segments, mss_cache is in \
     bytes, srtt_us holds microseconds shifted left by 3, sk_pacing_rate is bytes per second, \
     bpf_ktime_get_ns() returns nanoseconds and the design rates are megabits per second. Units \
     of some fields changed between kernel versions, so confirm each one in the REFERENCE \
     sections.",
];

const COT_PREAMBLE: &str = "Work through the following guidelines step by step before writing code.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error(transparent)]
    UnknownBase(#[from] CcaError),
    #[error("reference bundle is for {bundle} but the prompt targets {base}")]
    BundleMismatch { bundle: BaseCca, base: BaseCca },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptMode {
    ZeroShot,
    Cot,
}

impl std::str::FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "cot" => Ok(PromptMode::Cot),
            "zero_shot" | "zeroshot" => Ok(PromptMode::ZeroShot),
            other => Err(format!("unknown prompt mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSnippet {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceBundle {
    pub base: BaseCca,
    pub snippets: Vec<ReferenceSnippet>,
}

const REF_OPS: (&str, &str) = ("tcp_congestion_ops.h", include_str!("../assets/refs/tcp_congestion_ops.h"));
const REF_TCP_SOCK: (&str, &str) = ("tcp_sock.h", include_str!("../assets/refs/tcp_sock.h"));
const REF_ICSK: (&str, &str) = ("inet_connection_sock.h", include_str!("../assets/refs/inet_connection_sock.h"));
const REF_SOCK: (&str, &str) = ("sock.h", include_str!("../assets/refs/sock.h"));
const REF_HELPERS: (&str, &str) = ("bpf_tcp_helpers.h", include_str!("../assets/refs/bpf_tcp_helpers.h"));
const REF_CONG: (&str, &str) = ("tcp_cong.h", include_str!("../assets/refs/tcp_cong.h"));
const REF_TIME: (&str, &str) = ("time_units.h", include_str!("../assets/refs/time_units.h"));

/// Curated kernel definitions for `base`, by algorithm name.
pub fn load_reference_bundle(base: &str) -> Result<ReferenceBundle, CcaError> {
    let base: BaseCca = base.parse()?;
    let mut refs = vec![REF_OPS, REF_TCP_SOCK, REF_ICSK, REF_SOCK, REF_HELPERS, REF_CONG];
    if base != BaseCca::Reno {
        refs.push(REF_TIME);
    }
    let snippets =
        refs.into_iter().map(|(name, text)| ReferenceSnippet { name: name.to_string(), text: text.to_string() }).collect();
    Ok(ReferenceBundle { base, snippets })
}

/// Refiner settings the prompt was built for. Not rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptParams {
    pub model_id: String,
    pub temperature: f64,
    pub pool_size: u32,
    pub max_iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub mode: PromptMode,
    pub base: BaseCca,
    pub requirements: RequirementSet,
    pub instruction_text: String,
    pub design_text: String,
    pub base_source: String,
    pub references: Vec<ReferenceSnippet>,
    pub output_text: String,
    pub params: PromptParams,
}

fn pct(fraction: f64) -> String {
    format!("{}%", (fraction * 1e4).round() / 1e2)
}

/// R1/R2/R3 in words, each with its value and unit.
pub fn design_text(reqs: &RequirementSet, base: BaseCca) -> String {
    let mut t = String::new();
    writeln!(
        t,
        "R1 (minimum throughput): while competing with other flows on a congested uplink, the \
         connection must sustain at least {} Mbps.",
        reqs.r1_min_throughput_mbps
    )
    .unwrap();
    writeln!(
        t,
        "R2 (maximum throughput): the connection must never send faster than {} Mbps, leaving \
         the rest of the uplink to other devices in the home.",
        reqs.r2_max_throughput_mbps
    )
    .unwrap();
    write!(
        t,
        "R3 (loss fallback): when the cumulative packet loss over the last 10 seconds exceeds {}, \
         stop enforcing R1 and fall back to the throughput of unmodified {base}. R2 still applies \
         during the fallback.",
        pct(reqs.r3_loss_threshold)
    )
    .unwrap();
    t
}

fn output_text(reqs: &RequirementSet, base: BaseCca) -> String {
    let profile = ControlProfile::from_requirements(base, reqs, 1.0);
    format!(
        "Return the complete revised program, not a diff or an excerpt, in exactly one fenced code \
         block and no other code blocks. Keep a profile block directly after the license line and \
         update its values to match your code; use one key per line:\n\n\
         {PROFILE_BEGIN}\n{}{PROFILE_END}\n\n\
         boost_gain (at least 1) scales the R1 floor, cap_margin (in (0, 1]) scales the R2 cap \
         and fault_flags stays empty.",
        profile.to_text()
    )
}

pub fn build_prompt(
    mode: PromptMode,
    reqs: &RequirementSet,
    base: BaseCca,
    refs: &ReferenceBundle,
    cfg: &RefinerConfig,
) -> Result<Prompt, PromptError> {
    if refs.base != base {
        return Err(PromptError::BundleMismatch { bundle: refs.base, base });
    }
    let mut instruction_text = TASK_STATEMENT.to_string();
    if mode == PromptMode::Cot {
        instruction_text.push_str("\n\n");
        instruction_text.push_str(COT_PREAMBLE);
        for g in GUIDELINES {
            instruction_text.push_str("\n\n");
            instruction_text.push_str(g);
        }
    }
    Ok(Prompt {
        mode,
        base,
        requirements: *reqs,
        instruction_text,
        design_text: design_text(reqs, base),
        base_source: base_source(base).to_string(),
        references: refs.snippets.clone(),
        output_text: output_text(reqs, base),
        params: PromptParams {
            model_id: cfg.model_id.clone(),
            temperature: cfg.temperature,
            pool_size: cfg.pool_size,
            max_iterations: cfg.max_iterations,
        },
    })
}

impl Prompt {
    pub fn render(&self) -> String {
        let mut t = String::new();
        writeln!(t, "{INSTRUCTION_HEADER}\n\n{}\n", self.instruction_text).unwrap();
        writeln!(t, "{DESIGN_HEADER}\n\n{}\n", self.design_text).unwrap();
        writeln!(t, "{SOURCE_HEADER}: {}\n\n```c\n{}```\n", base_source_file_name(self.base), self.base_source).unwrap();
        for r in &self.references {
            writeln!(t, "{REFERENCE_HEADER}: {}\n\n```c\n{}```\n", r.name, r.text).unwrap();
        }
        writeln!(t, "{OUTPUT_HEADER}\n\n{}", self.output_text).unwrap();
        t
    }
}

/// Follow-up turn carrying the latest evaluation feedback verbatim.
pub fn feedback_turn(report: &EvalReport) -> String {
    format!(
        "The revised program was evaluated and scored {}/100. Fix every problem reported below.\n\n\
         {}\n\n\
         Return the complete revised program in exactly one fenced code block and keep the profile \
         block in sync with the code.",
        report.score,
        report.feedback_text()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prompt(mode: PromptMode, base: BaseCca) -> Prompt {
        let reqs = RequirementSet::new(16.0, 40.0, 0.05).unwrap();
        let refs = load_reference_bundle(base.name()).unwrap();
        build_prompt(mode, &reqs, base, &refs, &RefinerConfig::default()).unwrap()
    }

    #[test]
    fn cot_has_all_guidelines_and_zero_shot_none() {
        let cot = prompt(PromptMode::Cot, BaseCca::Cubic).render();
        let zs = prompt(PromptMode::ZeroShot, BaseCca::Cubic).render();
        for g in GUIDELINES {
            assert!(cot.contains(g));
            assert!(!zs.contains(g));
        }
        assert!(cot.contains("every incoming acknowledgment"));
        assert!(cot.contains("snd_cwnd") && cot.contains("sk_pacing_rate"));
        assert!(!zs.contains("Guideline"));
        for z in [&cot, &zs] {
            assert!(z.contains(&design_text(&RequirementSet::new(16.0, 40.0, 0.05).unwrap(), BaseCca::Cubic)));
            assert!(z.contains(base_source(BaseCca::Cubic)));
        }
    }

    #[test]
    fn design_mentions_values_with_units() {
        let d = design_text(&RequirementSet::new(16.0, 40.0, 0.05).unwrap(), BaseCca::Cubic);
        assert!(d.contains("16 Mbps") && d.contains("40 Mbps") && d.contains("5%"), "{d}");
        let d = design_text(&RequirementSet::new(7.5, 25.0, 0.025).unwrap(), BaseCca::Reno);
        assert!(d.contains("7.5 Mbps") && d.contains("2.5%"), "{d}");
    }

    #[test]
    fn sections_are_headed() {
        let t = prompt(PromptMode::Cot, BaseCca::Vegas).render();
        let order: Vec<usize> = [INSTRUCTION_HEADER, DESIGN_HEADER, SOURCE_HEADER, REFERENCE_HEADER, OUTPUT_HEADER]
            .iter()
            .map(|h| t.find(h).unwrap_or_else(|| panic!("{h} missing")))
            .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
        assert!(t.contains("## BASE CCA SOURCE: vegas.bpf.c"));
    }

    #[test]
    fn bundles() {
        for base in BaseCca::ALL {
            let b = load_reference_bundle(base.name()).unwrap();
            assert!(!b.snippets.is_empty());
            assert!(b.snippets.iter().all(|s| !s.text.trim().is_empty()));
        }
        let cubic = load_reference_bundle("cubic").unwrap();
        let tcp = cubic.snippets.iter().find(|s| s.name == "tcp_sock.h").unwrap();
        assert!(tcp.text.contains("struct tcp_sock {") && tcp.text.contains("snd_cwnd;"));
        assert!(matches!(load_reference_bundle("bbr"), Err(CcaError::UnknownBase(_))));
    }

    #[test]
    fn mismatched_bundle_is_rejected() {
        let reqs = RequirementSet::new(16.0, 40.0, 0.05).unwrap();
        let refs = load_reference_bundle("reno").unwrap();
        let r = build_prompt(PromptMode::Cot, &reqs, BaseCca::Cubic, &refs, &RefinerConfig::default());
        assert!(matches!(r, Err(PromptError::BundleMismatch { .. })));
    }
}

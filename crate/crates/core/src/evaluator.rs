//! The 0-100 satisfaction ladder.
//!
//! | rung | check                         | score when it is the last pass |
//! |------|-------------------------------|--------------------------------|
//! | F1   | compile                       | 20                             |
//! | F2   | BPF verifier                  | 40                             |
//! | F3   | R1 group (congested links)    | +20                            |
//! | F4   | R2 group (idle links)         | +20                            |
//! | F5   | R3 group (persistent loss)    | +20                            |
//!
//! A failed compile stops the ladder at 0 and a failed verifier check at 20.
//! All three performance groups are evaluated once the verifier passes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cca::{
    extract_profile, identify_base, ControlProfile, FaultFlag, BPF_FAULT_DIAGNOSTIC, COMPILE_FAULT_DIAGNOSTIC,
};
use crate::netsim::{run_scenario, standard_matrix, FlowSpec, GroupId, ScenarioSpec};
use crate::refinery::Candidate;
use crate::requirements::{HomeNetwork, RequirementSet};

/// R1 passes at this fraction of the minimum.
pub const R1_TOLERANCE: f64 = 0.95;
/// R2 passes up to this multiple of the maximum.
pub const R2_TOLERANCE: f64 = 1.05;
/// R3 passes up to this multiple of the base algorithm's throughput.
pub const R3_TOLERANCE: f64 = 1.10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("candidate {0} carries raw source without a control profile; simulated evaluation needs one")]
    MissingProfile(u32),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Simulated,
    Native,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub passed: bool,
    /// Diagnostics on failure, empty on success.
    pub detail: String,
}

impl CheckResult {
    pub fn pass() -> Self {
        CheckResult { passed: true, detail: String::new() }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        CheckResult { passed: false, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeasurement {
    pub scenario: ScenarioSpec,
    pub measured_mbps: f64,
    pub loss_rate: f64,
    /// Unmodified base algorithm under the same scenario, R3 only.
    pub base_mbps: Option<f64>,
    /// Pass boundary: a floor for R1, a ceiling for R2 and R3.
    pub limit_mbps: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group: GroupId,
    pub passed: bool,
    /// R1 minimum or R2 maximum in Mbps, R3 loss threshold as a fraction.
    pub requirement: f64,
    /// Injected defect that forced the group to fail.
    pub forced_by: Option<FaultFlag>,
    pub measurements: Vec<ScenarioMeasurement>,
    pub simulations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeedbackTag {
    F1,
    F2,
    F3,
    F4,
    F5,
}

impl FeedbackTag {
    pub fn for_group(group: GroupId) -> Self {
        match group {
            GroupId::R1 => FeedbackTag::F3,
            GroupId::R2 => FeedbackTag::F4,
            GroupId::R3 => FeedbackTag::F5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    pub tag: FeedbackTag,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub compile: CheckResult,
    /// `None` when compilation failed.
    pub bpf: Option<CheckResult>,
    /// Empty unless the verifier check passed.
    pub perf_groups: BTreeMap<GroupId, GroupResult>,
    pub score: u32,
    pub feedback: Vec<Feedback>,
    /// Simulator runs spent on this report.
    pub simulations: u32,
}

impl EvalReport {
    /// Feedback rendered as one block per message.
    pub fn feedback_text(&self) -> String {
        self.feedback.iter().map(|f| f.message.as_str()).collect::<Vec<_>>().join("\n\n")
    }

    pub fn has_tag(&self, tag: FeedbackTag) -> bool {
        self.feedback.iter().any(|f| f.tag == tag)
    }
}

/// Assembles the report from ladder results. `bpf` must be `None` when
/// compilation failed and `perf_groups` empty unless `bpf` passed.
pub fn score_and_feedback(
    compile: CheckResult,
    bpf: Option<CheckResult>,
    perf_groups: BTreeMap<GroupId, GroupResult>,
) -> EvalReport {
    let mut feedback = Vec::new();
    let mut score = 0;
    if compile.passed {
        score = 20;
    } else {
        feedback.push(Feedback { tag: FeedbackTag::F1, message: format!("F1 compile error:\n{}", compile.detail) });
    }
    let bpf_passed = compile.passed && bpf.as_ref().is_some_and(|b| b.passed);
    if let Some(b) = bpf.as_ref().filter(|b| compile.passed && !b.passed) {
        feedback.push(Feedback { tag: FeedbackTag::F2, message: format!("F2 BPF verifier error:\n{}", b.detail) });
    }
    if bpf_passed {
        score = 40;
        for g in perf_groups.values() {
            if g.passed {
                score += 20;
            } else {
                feedback.push(Feedback { tag: FeedbackTag::for_group(g.group), message: group_feedback(g) });
            }
        }
    }
    let simulations = perf_groups.values().map(|g| g.simulations).sum();
    EvalReport { compile, bpf, perf_groups, score, feedback, simulations }
}

fn group_feedback(g: &GroupResult) -> String {
    let mut m = String::new();
    let tag = FeedbackTag::for_group(g.group);
    match g.group {
        GroupId::R1 => writeln!(
            m,
            "{tag:?} R1 not met: on congested links the flow must sustain at least {} Mbps \
             (pass at >= {:.2} Mbps).",
            g.requirement,
            g.requirement * R1_TOLERANCE
        ),
        GroupId::R2 => writeln!(
            m,
            "{tag:?} R2 not met: on idle links the flow must stay at or below {} Mbps \
             (pass at <= {:.2} Mbps).",
            g.requirement,
            g.requirement * R2_TOLERANCE
        ),
        GroupId::R3 => writeln!(
            m,
            "{tag:?} R3 not met: once cumulative loss exceeds {}% the flow must fall back to the base \
             algorithm's throughput (pass at <= {:.0}% of the base).",
            g.requirement * 100.0,
            R3_TOLERANCE * 100.0
        ),
    }
    .unwrap();
    if let Some(flag) = g.forced_by {
        writeln!(m, "Injected defect {flag} is active in the candidate.").unwrap();
    }
    for s in &g.measurements {
        let sc = &s.scenario;
        write!(
            m,
            "- {} Mbps link, rtt {} ms, {} competing, random loss {}%: measured {:.2} Mbps, loss {:.2}%",
            sc.bottleneck_mbps,
            sc.rtt_ms,
            sc.competing_flows,
            sc.random_loss_rate * 100.0,
            s.measured_mbps,
            s.loss_rate * 100.0
        )
        .unwrap();
        if let Some(base) = s.base_mbps {
            write!(m, ", base {base:.2} Mbps").unwrap();
        }
        let gap = match g.group {
            GroupId::R1 => g.requirement - s.measured_mbps,
            GroupId::R2 => s.measured_mbps - g.requirement,
            GroupId::R3 => s.measured_mbps - s.base_mbps.unwrap_or(0.0),
        };
        let word = if g.group == GroupId::R1 { "shortfall" } else { "excess" };
        if gap > 0.0 {
            write!(m, ", {word} {gap:.2} Mbps").unwrap();
        }
        writeln!(m, "{}", if s.passed { " (ok)" } else { " (FAIL)" }).unwrap();
    }
    m.trim_end().to_string()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of scenario `scenario_idx` when evaluating `candidate_id`.
pub fn scenario_seed(run_seed: u64, candidate_id: u32, scenario_idx: usize) -> u64 {
    splitmix(splitmix(splitmix(run_seed) ^ candidate_id as u64) ^ scenario_idx as u64)
}

/// What the simulator runs for a candidate: its profile, or the unmodified
/// algorithm when the source is a shipped program verbatim.
fn simulated_flow(candidate: &Candidate) -> Result<Option<FlowSpec>, EvalError> {
    if let Some(p) = &candidate.control_profile {
        return Ok(Some(FlowSpec::Custom(p.clone())));
    }
    match extract_profile(&candidate.source_text) {
        Ok(Some(p)) => Ok(Some(FlowSpec::Custom(p))),
        Err(_) => Ok(None),
        Ok(None) => match identify_base(&candidate.source_text) {
            Ok(b) => Ok(Some(FlowSpec::Base(b))),
            Err(_) => Err(EvalError::MissingProfile(candidate.id)),
        },
    }
}

fn profile_of(flow: &FlowSpec) -> Option<&ControlProfile> {
    match flow {
        FlowSpec::Custom(p) => Some(p),
        FlowSpec::Base(_) => None,
    }
}

/// External tools for the native backend.
#[derive(Debug, Clone, PartialEq)]
pub struct NativeToolchain {
    pub compiler: PathBuf,
    pub verifier: PathBuf,
    pub include_dirs: Vec<PathBuf>,
    /// Sources and objects are written under `work_dir/cand-<id>/`.
    pub work_dir: PathBuf,
}

impl Default for NativeToolchain {
    fn default() -> Self {
        NativeToolchain {
            compiler: "clang".into(),
            verifier: "bpftool".into(),
            include_dirs: Vec::new(),
            work_dir: std::env::temp_dir().join("necc-native"),
        }
    }
}

impl NativeToolchain {
    fn paths(&self, candidate: &Candidate) -> (PathBuf, PathBuf) {
        let dir = self.work_dir.join(format!("cand-{}", candidate.id));
        (dir.join("necc.bpf.c"), dir.join("necc.bpf.o"))
    }

    fn run(&self, tool: &Path, args: &[&std::ffi::OsStr]) -> Result<(bool, String), EvalError> {
        let out = Command::new(tool).args(args).output().map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                EvalError::BackendUnavailable(format!("`{}` not found", tool.display()))
            } else {
                EvalError::BackendUnavailable(format!("cannot run `{}`: {e}", tool.display()))
            }
        })?;
        let mut text = String::from_utf8_lossy(&out.stderr).into_owned();
        let stdout = String::from_utf8_lossy(&out.stdout);
        if !stdout.trim().is_empty() {
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&stdout);
        }
        if !out.status.success() && text.trim().is_empty() {
            text = format!("`{}` exited with {}", tool.display(), out.status);
        }
        Ok((out.status.success(), text))
    }

    fn compile(&self, candidate: &Candidate) -> Result<CheckResult, EvalError> {
        let (src, obj) = self.paths(candidate);
        let dir = src.parent().expect("candidate dir");
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&src, &candidate.source_text))
            .map_err(|e| EvalError::BackendUnavailable(format!("{}: {e}", dir.display())))?;
        let mut args: Vec<std::ffi::OsString> =
            ["-O2", "-g", "-target", "bpf", "-c"].iter().map(Into::into).collect();
        args.push(src.clone().into());
        args.push("-o".into());
        args.push(obj.into());
        for inc in &self.include_dirs {
            args.push(format!("-I{}", inc.display()).into());
        }
        let refs: Vec<&std::ffi::OsStr> = args.iter().map(|a| a.as_os_str()).collect();
        let (ok, text) = self.run(&self.compiler, &refs)?;
        Ok(if ok { CheckResult::pass() } else { CheckResult::fail(text) })
    }

    fn verify(&self, candidate: &Candidate) -> Result<CheckResult, EvalError> {
        let (_, obj) = self.paths(candidate);
        if !obj.exists() {
            let c = self.compile(candidate)?;
            if !c.passed {
                return Ok(c);
            }
        }
        let (ok, text) = self.run(&self.verifier, &["struct_ops".as_ref(), "register".as_ref(), obj.as_os_str()])?;
        if !ok {
            return Ok(CheckResult::fail(text));
        }
        if let Some(name) = ops_name(&candidate.source_text) {
            let _ = self.run(&self.verifier, &["struct_ops".as_ref(), "unregister".as_ref(), "name".as_ref(), name.as_ref()]);
        }
        Ok(CheckResult::pass())
    }
}

fn ops_name(source: &str) -> Option<String> {
    let re = regex::Regex::new(r#"\.name\s*=\s*"([^"]+)""#).expect("valid regex");
    re.captures(source).map(|c| c[1].to_string())
}

pub fn check_compile(
    candidate: &Candidate,
    backend: Backend,
    native: &NativeToolchain,
) -> Result<CheckResult, EvalError> {
    if let Some(err) = &candidate.format_error {
        return Ok(CheckResult::fail(format!("response format error: {err}")));
    }
    if candidate.control_profile.is_none() && candidate.source_text.trim().is_empty() {
        return Ok(CheckResult::fail("nothing to compile: the candidate has no source"));
    }
    if backend == Backend::Native {
        return native.compile(candidate);
    }
    let flow = match simulated_flow(candidate)? {
        Some(flow) => flow,
        None => {
            let err = extract_profile(&candidate.source_text).expect_err("unparseable profile");
            return Ok(CheckResult::fail(format!("necc.bpf.c: error: {err}\n1 error generated.")));
        }
    };
    if profile_of(&flow).is_some_and(|p| p.has_fault(FaultFlag::CompileFault)) {
        return Ok(CheckResult::fail(COMPILE_FAULT_DIAGNOSTIC));
    }
    Ok(CheckResult::pass())
}

pub fn check_bpf(candidate: &Candidate, backend: Backend, native: &NativeToolchain) -> Result<CheckResult, EvalError> {
    if backend == Backend::Native {
        return native.verify(candidate);
    }
    let Some(flow) = simulated_flow(candidate)? else {
        return Ok(CheckResult::fail("libbpf: failed to open object: control profile does not parse"));
    };
    let Some(p) = profile_of(&flow) else {
        return Ok(CheckResult::pass());
    };
    if p.has_fault(FaultFlag::BpfFault) {
        return Ok(CheckResult::fail(BPF_FAULT_DIAGNOSTIC));
    }
    match p.validate() {
        Ok(()) => Ok(CheckResult::pass()),
        Err(e) => Ok(CheckResult::fail(format!("libbpf: prog 'necc_cong_avoid': invalid program: {e}"))),
    }
}

fn group_fault(group: GroupId) -> FaultFlag {
    match group {
        GroupId::R1 => FaultFlag::R1Fault,
        GroupId::R2 => FaultFlag::R2Fault,
        GroupId::R3 => FaultFlag::R3Fault,
    }
}

/// Runs every scenario of one group. `scenarios` carry their final seeds.
pub fn check_perf_group(
    candidate: &Candidate,
    group: GroupId,
    scenarios: &[ScenarioSpec],
    reqs: &RequirementSet,
) -> Result<GroupResult, EvalError> {
    let flow = simulated_flow(candidate)?.ok_or(EvalError::MissingProfile(candidate.id))?;
    let requirement = match group {
        GroupId::R1 => reqs.r1_min_throughput_mbps,
        GroupId::R2 => reqs.r2_max_throughput_mbps,
        GroupId::R3 => reqs.r3_loss_threshold,
    };
    let measurements: Vec<ScenarioMeasurement> = scenarios
        .par_iter()
        .map(|sc| {
            let stats = run_scenario(sc, std::slice::from_ref(&flow))[0];
            let base_mbps = (group == GroupId::R3)
                .then(|| run_scenario(sc, &[FlowSpec::Base(flow.base_cca())])[0].mean_throughput_mbps);
            let measured = stats.mean_throughput_mbps;
            let (limit, passed) = match group {
                GroupId::R1 => {
                    let l = requirement * R1_TOLERANCE;
                    (l, measured >= l)
                }
                GroupId::R2 => {
                    let l = requirement * R2_TOLERANCE;
                    (l, measured <= l)
                }
                GroupId::R3 => {
                    let l = base_mbps.unwrap() * R3_TOLERANCE;
                    (l, measured <= l)
                }
            };
            ScenarioMeasurement {
                scenario: sc.clone(),
                measured_mbps: measured,
                loss_rate: stats.loss_rate,
                base_mbps,
                limit_mbps: limit,
                passed,
            }
        })
        .collect();
    let forced_by = profile_of(&flow).and_then(|p| p.has_fault(group_fault(group)).then_some(group_fault(group)));
    let per_scenario = if group == GroupId::R3 { 2 } else { 1 };
    Ok(GroupResult {
        group,
        passed: forced_by.is_none() && measurements.iter().all(|m| m.passed),
        requirement,
        forced_by,
        simulations: (scenarios.len() * per_scenario) as u32,
        measurements,
    })
}

/// Ladder driver for one requirement set and scenario matrix.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub backend: Backend,
    pub reqs: RequirementSet,
    pub scenarios: Vec<(GroupId, ScenarioSpec)>,
    pub run_seed: u64,
    pub native: NativeToolchain,
}

impl Evaluator {
    /// Simulated backend over the standard matrix.
    pub fn new(reqs: RequirementSet, net: &HomeNetwork, run_seed: u64) -> Self {
        let scenarios = standard_matrix(&reqs, net);
        Evaluator { backend: Backend::Simulated, reqs, scenarios, run_seed, native: NativeToolchain::default() }
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_scenarios(mut self, scenarios: Vec<(GroupId, ScenarioSpec)>) -> Self {
        self.scenarios = scenarios;
        self
    }

    /// Scenarios of `group` seeded for `candidate_id`.
    pub fn group_scenarios(&self, group: GroupId, candidate_id: u32) -> Vec<ScenarioSpec> {
        self.scenarios
            .iter()
            .enumerate()
            .filter(|(_, (g, _))| *g == group)
            .map(|(i, (_, s))| s.clone().with_seed(scenario_seed(self.run_seed, candidate_id, i)))
            .collect()
    }

    pub fn evaluate(&self, candidate: &Candidate) -> Result<EvalReport, EvalError> {
        let compile = check_compile(candidate, self.backend, &self.native)?;
        if !compile.passed {
            return Ok(score_and_feedback(compile, None, BTreeMap::new()));
        }
        let bpf = check_bpf(candidate, self.backend, &self.native)?;
        if !bpf.passed {
            return Ok(score_and_feedback(compile, Some(bpf), BTreeMap::new()));
        }
        let mut groups = BTreeMap::new();
        for group in GroupId::ALL {
            let scenarios = self.group_scenarios(group, candidate.id);
            if scenarios.is_empty() {
                continue;
            }
            groups.insert(group, check_perf_group(candidate, group, &scenarios, &self.reqs)?);
        }
        Ok(score_and_feedback(compile, Some(bpf), groups))
    }

    /// Evaluates candidates concurrently; results are in input order.
    pub fn evaluate_all(&self, candidates: &[Candidate]) -> Vec<Result<EvalReport, EvalError>> {
        candidates.par_iter().map(|c| self.evaluate(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cca::{base_source, render_patched_source, BaseCca};

    fn reqs() -> RequirementSet {
        RequirementSet::new(16.0, 30.0, 0.05).unwrap()
    }

    fn candidate(faults: &[FaultFlag]) -> Candidate {
        let p = ControlProfile::from_requirements(BaseCca::Cubic, &reqs(), 1.2).with_faults(faults.iter().copied());
        Candidate::from_profile(0, p)
    }

    fn group(g: GroupId, passed: bool) -> GroupResult {
        GroupResult { group: g, passed, requirement: 1.0, forced_by: None, measurements: vec![], simulations: 1 }
    }

    #[test]
    fn simulated_compile_rules() {
        let n = NativeToolchain::default();
        assert!(check_compile(&candidate(&[]), Backend::Simulated, &n).unwrap().passed);
        let c = check_compile(&candidate(&[FaultFlag::CompileFault]), Backend::Simulated, &n).unwrap();
        assert_eq!(c, CheckResult::fail(COMPILE_FAULT_DIAGNOSTIC));

        let empty = Candidate { source_text: String::new(), control_profile: None, ..candidate(&[]) };
        assert!(!check_compile(&empty, Backend::Simulated, &n).unwrap().passed);

        let mut broken = candidate(&[]);
        broken.control_profile = None;
        broken.source_text = broken.source_text.replace("boost_gain = 1.2", "boost_gain = ???");
        let c = check_compile(&broken, Backend::Simulated, &n).unwrap();
        assert!(!c.passed && c.detail.contains("malformed control profile"), "{c:?}");

        let raw = Candidate { source_text: "int main() {}".into(), control_profile: None, ..candidate(&[]) };
        assert_eq!(check_compile(&raw, Backend::Simulated, &n), Err(EvalError::MissingProfile(0)));
    }

    #[test]
    fn simulated_bpf_rules() {
        let n = NativeToolchain::default();
        assert!(check_bpf(&candidate(&[]), Backend::Simulated, &n).unwrap().passed);
        let c = check_bpf(&candidate(&[FaultFlag::BpfFault]), Backend::Simulated, &n).unwrap();
        assert_eq!(c.detail, BPF_FAULT_DIAGNOSTIC);
        let mut bad = candidate(&[]);
        bad.control_profile.as_mut().unwrap().min_rate_mbps = 0.0;
        let c = check_bpf(&bad, Backend::Simulated, &n).unwrap();
        assert!(!c.passed && c.detail.contains("min_rate_mbps"), "{c:?}");
    }

    #[test]
    fn ladder_examples() {
        let r = score_and_feedback(CheckResult::fail("boom"), None, BTreeMap::new());
        assert_eq!((r.score, r.feedback.len()), (0, 1));
        assert_eq!(r.feedback[0].tag, FeedbackTag::F1);
        assert!(r.feedback[0].message.contains("boom"));

        let r = score_and_feedback(CheckResult::pass(), Some(CheckResult::fail("verifier says no")), BTreeMap::new());
        assert_eq!(r.score, 20);
        assert_eq!(r.feedback[0].tag, FeedbackTag::F2);
        assert!(r.feedback[0].message.contains("verifier says no"));

        let all = |r1| GroupId::ALL.into_iter().map(|g| (g, group(g, g != GroupId::R1 || r1))).collect();
        let r = score_and_feedback(CheckResult::pass(), Some(CheckResult::pass()), all(true));
        assert_eq!((r.score, r.feedback.len(), r.simulations), (100, 0, 3));
        let r = score_and_feedback(CheckResult::pass(), Some(CheckResult::pass()), all(false));
        assert_eq!(r.score, 80);
        assert_eq!(r.feedback.iter().map(|f| f.tag).collect::<Vec<_>>(), vec![FeedbackTag::F3]);
    }

    #[test]
    fn seeds_differ_per_candidate_and_scenario() {
        assert_ne!(scenario_seed(1, 0, 0), scenario_seed(1, 1, 0));
        assert_ne!(scenario_seed(1, 0, 0), scenario_seed(1, 0, 1));
        assert_ne!(scenario_seed(1, 0, 0), scenario_seed(2, 0, 0));
        assert_eq!(scenario_seed(7, 3, 2), scenario_seed(7, 3, 2));
    }

    #[test]
    fn compile_failure_runs_no_simulation() {
        let ev = Evaluator::new(reqs(), &HomeNetwork::new(60.0).unwrap(), 1);
        let r = ev.evaluate(&candidate(&[FaultFlag::CompileFault, FaultFlag::R1Fault])).unwrap();
        assert_eq!((r.score, r.simulations), (0, 0));
        assert!(r.bpf.is_none() && r.perf_groups.is_empty());
        let r = ev.evaluate(&candidate(&[FaultFlag::BpfFault])).unwrap();
        assert_eq!((r.score, r.simulations), (20, 0));
    }

    #[test]
    fn forced_group_failure_names_the_defect() {
        let sc = ScenarioSpec::new(60.0, 20.0).with_timing(6.0, 1.0).with_seed(3);
        let g = check_perf_group(&candidate(&[FaultFlag::R2Fault]), GroupId::R2, &[sc], &reqs()).unwrap();
        assert!(!g.passed);
        assert_eq!(g.forced_by, Some(FaultFlag::R2Fault));
        let r = score_and_feedback(CheckResult::pass(), Some(CheckResult::pass()), BTreeMap::from([(GroupId::R2, g)]));
        let msg = &r.feedback[0].message;
        assert!(msg.starts_with("F4 R2 not met") && msg.contains("R2_FAULT") && msg.contains("excess"), "{msg}");
        assert!(msg.contains("30 Mbps") && msg.contains("measured"), "{msg}");
    }

    #[test]
    fn base_source_is_its_own_r3_reference() {
        let c = Candidate { source_text: base_source(BaseCca::Cubic).into(), control_profile: None, ..candidate(&[]) };
        let n = NativeToolchain::default();
        assert!(check_compile(&c, Backend::Simulated, &n).unwrap().passed);
        assert!(check_bpf(&c, Backend::Simulated, &n).unwrap().passed);
        let sc = ScenarioSpec::new(60.0, 20.0).with_random_loss(0.06).with_timing(10.0, 2.0).with_seed(5);
        let g = check_perf_group(&c, GroupId::R3, &[sc], &reqs()).unwrap();
        assert!(g.passed);
        assert_eq!(g.measurements[0].base_mbps, Some(g.measurements[0].measured_mbps));
    }

    #[test]
    fn raw_source_without_profile_is_rejected_for_simulation() {
        let c = Candidate { source_text: "/* hand written */".into(), control_profile: None, ..candidate(&[]) };
        let sc = ScenarioSpec::new(10.0, 20.0);
        assert_eq!(check_perf_group(&c, GroupId::R2, &[sc], &reqs()), Err(EvalError::MissingProfile(0)));
    }

    #[cfg(unix)]
    fn fake_tool(dir: &Path, name: &str, body: &str) -> PathBuf {
        use std::os::unix::fs::PermissionsExt;
        let p = dir.join(name);
        std::fs::write(&p, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    #[cfg(unix)]
    #[test]
    fn native_backend_captures_tool_output() {
        let dir = tempfile::tempdir().unwrap();
        let cc_fail = fake_tool(dir.path(), "cc-fail", "echo \"$6:3:1: error: use of undeclared identifier 'x'\" >&2; exit 1");
        let cc_ok = fake_tool(dir.path(), "cc-ok", "touch \"$8\"");
        let verifier = fake_tool(dir.path(), "verifier", "[ \"$2\" = register ] && { echo 'R1 invalid mem access' >&2; exit 1; }; exit 0");
        let c = candidate(&[]);
        let mut tools = NativeToolchain { work_dir: dir.path().join("work"), ..NativeToolchain::default() };

        tools.compiler = cc_fail;
        let r = check_compile(&c, Backend::Native, &tools).unwrap();
        assert!(!r.passed && r.detail.contains("necc.bpf.c:3:1: error: use of undeclared identifier"), "{r:?}");
        let written = std::fs::read_to_string(dir.path().join("work/cand-0/necc.bpf.c")).unwrap();
        assert_eq!(written, c.source_text);

        tools.compiler = cc_ok;
        tools.verifier = verifier;
        assert!(check_compile(&c, Backend::Native, &tools).unwrap().passed);
        let r = check_bpf(&c, Backend::Native, &tools).unwrap();
        assert_eq!(r, CheckResult::fail("R1 invalid mem access\n"));
    }

    #[test]
    fn missing_native_tool_is_unavailable() {
        let tools = NativeToolchain {
            compiler: "/nonexistent/necc-clang".into(),
            work_dir: tempfile::tempdir().unwrap().keep(),
            ..NativeToolchain::default()
        };
        let r = check_compile(&candidate(&[]), Backend::Native, &tools);
        assert!(matches!(r, Err(EvalError::BackendUnavailable(_))), "{r:?}");
    }

    #[test]
    fn ops_name_is_found() {
        let p = ControlProfile::from_requirements(BaseCca::Reno, &reqs(), 1.0);
        let src = render_patched_source(&p, base_source(BaseCca::Reno)).unwrap();
        assert_eq!(ops_name(&src).as_deref(), Some("necc_reno"));
    }
}

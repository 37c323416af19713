//! Candidate pools and the generate, evaluate, refine loop.
//!
//! The loop evaluates the initial pool, stops as soon as one candidate
//! scores 100 and otherwise refines every failing candidate, for at most
//! `max_iterations` rounds. Each pool slot keeps the better of parent and
//! child, so the best score never decreases.

mod llm;
mod pricing;
mod reference;

use std::collections::BTreeMap;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use llm::{parse_response, ExchangeObserver, LlmRefiner, ParsedResponse};
pub use pricing::{Price, PriceTable, PricingError};
pub use reference::{reference_gain, ReferenceRefiner, CAP_MARGIN_STEP, F3_GAIN_STEP};

use crate::cca::{base_source, render_patched_source, BaseCca, ControlProfile, FaultSet};
use crate::chat::ChatMessage;
use crate::evaluator::{EvalError, EvalReport, Evaluator};
use crate::prompting::{build_prompt, load_reference_bundle, Prompt, PromptError, PromptMode};
use crate::requirements::RequirementSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("invalid refiner configuration: {0}")]
    InvalidConfig(String),
    #[error("refiner unavailable: {message}")]
    RefinerUnavailable { message: String, partial: Vec<Candidate> },
    #[error(transparent)]
    Pricing(#[from] PricingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinerBackend {
    Reference,
    Llm,
}

/// Defects injected into the initial pool of the reference backend.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FaultPlan {
    /// Applied to every initial candidate.
    #[serde(default)]
    pub every: FaultSet,
    /// Applied to the initial candidate with this index.
    #[serde(default)]
    pub per_candidate: BTreeMap<u32, FaultSet>,
    /// The refiner cannot remove injected flags.
    #[serde(default)]
    pub persistent: bool,
}

impl FaultPlan {
    pub fn faults_for(&self, index: u32) -> FaultSet {
        let mut f = self.every.clone();
        if let Some(extra) = self.per_candidate.get(&index) {
            f.extend(extra.iter().copied());
        }
        f
    }

    pub fn is_empty(&self) -> bool {
        self.every.is_empty() && self.per_candidate.values().all(|f| f.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinerConfig {
    pub backend: RefinerBackend,
    pub model_id: String,
    pub temperature: f64,
    pub pool_size: u32,
    pub max_iterations: u32,
    pub prompt_mode: PromptMode,
    #[serde(default)]
    pub fault_plan: FaultPlan,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            backend: RefinerBackend::Reference,
            model_id: "gpt-4o-2024-08-06".to_string(),
            temperature: 0.5,
            pool_size: 5,
            max_iterations: 5,
            prompt_mode: PromptMode::Cot,
            fault_plan: FaultPlan::default(),
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<(), RefineError> {
        if self.pool_size < 1 {
            return Err(RefineError::InvalidConfig("pool size must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(RefineError::InvalidConfig(format!("temperature must be in [0, 2], got {}", self.temperature)));
        }
        if self.max_iterations < 1 {
            return Err(RefineError::InvalidConfig("max iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cost {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub dollars: f64,
}

impl Add for Cost {
    type Output = Cost;

    fn add(self, o: Cost) -> Cost {
        Cost {
            prompt_tokens: self.prompt_tokens + o.prompt_tokens,
            completion_tokens: self.completion_tokens + o.completion_tokens,
            dollars: self.dollars + o.dollars,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u32,
    pub iteration_born: u32,
    pub parent_id: Option<u32>,
    pub source_text: String,
    pub control_profile: Option<ControlProfile>,
    /// Set when a model response broke the output contract.
    pub format_error: Option<String>,
    pub report: Option<EvalReport>,
    /// Cost of the request that produced this candidate.
    pub cost: Cost,
    /// Chat turns that led to this candidate, empty for the reference backend.
    #[serde(default)]
    pub conversation: Vec<ChatMessage>,
}

impl Candidate {
    /// Initial candidate whose source is the profile rendered over the
    /// shipped base program.
    pub fn from_profile(id: u32, profile: ControlProfile) -> Self {
        let source_text =
            render_patched_source(&profile, base_source(profile.base_cca)).expect("shipped sources carry the hooks");
        Candidate {
            id,
            iteration_born: 0,
            parent_id: None,
            source_text,
            control_profile: Some(profile),
            format_error: None,
            report: None,
            cost: Cost::default(),
            conversation: Vec::new(),
        }
    }

    pub fn score(&self) -> Option<u32> {
        self.report.as_ref().map(|r| r.score)
    }
}

/// A refiner backend.
pub trait Refiner: Sync {
    /// `cfg.pool_size` candidates with ids `0..pool_size`.
    fn generate_pool(&self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<Vec<Candidate>, RefineError>;

    /// One child of an evaluated, failing `parent`.
    fn refine_one(
        &self,
        parent: &Candidate,
        prompt: &Prompt,
        cfg: &RefinerConfig,
        child_id: u32,
        iteration: u32,
    ) -> Result<Candidate, RefineError>;
}

/// Children for every failing candidate of `pool`; score-100 candidates are
/// returned unchanged. Children are numbered from `next_id` in pool order.
pub fn refine(
    refiner: &dyn Refiner,
    pool: &[Candidate],
    prompt: &Prompt,
    cfg: &RefinerConfig,
    next_id: &mut u32,
    iteration: u32,
) -> Result<Vec<Candidate>, RefineError> {
    let mut out = Vec::with_capacity(pool.len());
    for c in pool {
        let score = c.score().ok_or_else(|| RefineError::InvalidConfig(format!("candidate {} is unevaluated", c.id)))?;
        if score == 100 {
            out.push(c.clone());
            continue;
        }
        match refiner.refine_one(c, prompt, cfg, *next_id, iteration) {
            Ok(child) => {
                *next_id += 1;
                out.push(child);
            }
            Err(RefineError::RefinerUnavailable { message, mut partial }) => {
                out.append(&mut partial);
                return Err(RefineError::RefinerUnavailable { message, partial: out });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Succeeded,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub id: u32,
    pub parent_id: Option<u32>,
    pub score: u32,
    pub dollars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    /// Candidates generated and evaluated in this iteration.
    pub evaluated: Vec<CandidateSummary>,
    /// Scores of the pool carried forward, by slot.
    pub pool_scores: Vec<u32>,
    pub best_score: u32,
    pub cumulative_dollars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub iterations: Vec<IterationRecord>,
    /// `None` while the loop is running or after a refiner failure.
    pub status: Option<RunStatus>,
}

impl RunHistory {
    pub fn best_scores(&self) -> Vec<u32> {
        self.iterations.iter().map(|r| r.best_score).collect()
    }

    /// The initial pool, in generation order.
    pub fn initial(&self) -> &[CandidateSummary] {
        self.iterations.first().map(|r| r.evaluated.as_slice()).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub best: Candidate,
    pub history: RunHistory,
    /// Every evaluated candidate, by id.
    pub candidates: Vec<Candidate>,
    pub prompt: Prompt,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoopError {
    #[error(transparent)]
    Config(RefineError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("refiner unavailable: {message}")]
    RefinerUnavailable { message: String, history: RunHistory, candidates: Vec<Candidate> },
}

fn evaluate_into(evaluator: &Evaluator, batch: &mut [Candidate]) -> Result<(), EvalError> {
    let reports = evaluator.evaluate_all(batch);
    for (c, r) in batch.iter_mut().zip(reports) {
        c.report = Some(r?);
    }
    Ok(())
}

fn summary(c: &Candidate) -> CandidateSummary {
    CandidateSummary { id: c.id, parent_id: c.parent_id, score: c.score().unwrap_or(0), dollars: c.cost.dollars }
}

/// Highest score, ties to the lowest id.
fn best_of<'a>(cs: impl IntoIterator<Item = &'a Candidate>) -> Option<&'a Candidate> {
    cs.into_iter().min_by_key(|c| (std::cmp::Reverse(c.score().unwrap_or(0)), c.id))
}

struct LoopState {
    history: RunHistory,
    all: BTreeMap<u32, Candidate>,
    dollars: f64,
}

impl LoopState {
    fn record(&mut self, iteration: u32, evaluated: &[Candidate], pool: &[Candidate]) {
        for c in evaluated {
            self.dollars += c.cost.dollars;
            self.all.insert(c.id, c.clone());
        }
        let pool_scores: Vec<u32> = pool.iter().map(|c| c.score().unwrap_or(0)).collect();
        let best_score = pool_scores.iter().copied().max().unwrap_or(0);
        self.history.iterations.push(IterationRecord {
            iteration,
            evaluated: evaluated.iter().map(summary).collect(),
            pool_scores,
            best_score,
            cumulative_dollars: self.dollars,
        });
    }

    fn unavailable(mut self, message: String, partial: Vec<Candidate>) -> LoopError {
        for c in partial {
            self.all.entry(c.id).or_insert(c);
        }
        LoopError::RefinerUnavailable { message, history: self.history, candidates: self.all.into_values().collect() }
    }
}

pub fn run_loop(
    reqs: &RequirementSet,
    base: BaseCca,
    cfg: &RefinerConfig,
    refiner: &dyn Refiner,
    evaluator: &Evaluator,
) -> Result<RunOutcome, LoopError> {
    cfg.validate().map_err(LoopError::Config)?;
    let refs = load_reference_bundle(base.name()).map_err(PromptError::from)?;
    let prompt = build_prompt(cfg.prompt_mode, reqs, base, &refs, cfg)?;
    let mut state = LoopState { history: RunHistory { iterations: Vec::new(), status: None }, all: BTreeMap::new(), dollars: 0.0 };

    let mut pool = match refiner.generate_pool(&prompt, cfg) {
        Ok(p) => p,
        Err(RefineError::RefinerUnavailable { message, partial }) => return Err(state.unavailable(message, partial)),
        Err(e) => return Err(LoopError::Config(e)),
    };
    evaluate_into(evaluator, &mut pool)?;
    state.record(0, &pool, &pool);
    let mut next_id = pool.iter().map(|c| c.id + 1).max().unwrap_or(0);

    let mut iteration = 0;
    while iteration < cfg.max_iterations && !pool.iter().any(|c| c.score() == Some(100)) {
        iteration += 1;
        let children = match refine(refiner, &pool, &prompt, cfg, &mut next_id, iteration) {
            Ok(c) => c,
            Err(RefineError::RefinerUnavailable { message, partial }) => {
                let fresh = partial.into_iter().filter(|c| c.report.is_none()).collect();
                return Err(state.unavailable(message, fresh));
            }
            Err(e) => return Err(LoopError::Config(e)),
        };
        let (mut fresh, slots): (Vec<Candidate>, Vec<usize>) = children
            .into_iter()
            .enumerate()
            .filter(|(_, c)| c.report.is_none())
            .map(|(i, c)| (c, i))
            .unzip();
        evaluate_into(evaluator, &mut fresh)?;
        for (child, slot) in fresh.iter().zip(&slots) {
            if child.score() >= pool[*slot].score() {
                pool[*slot] = child.clone();
            }
        }
        state.record(iteration, &fresh, &pool);
    }

    let status = if pool.iter().any(|c| c.score() == Some(100)) { RunStatus::Succeeded } else { RunStatus::Exhausted };
    state.history.status = Some(status);
    let candidates: Vec<Candidate> = state.all.into_values().collect();
    let best = best_of(&candidates).expect("pool is non-empty").clone();
    Ok(RunOutcome { best, history: state.history, candidates, prompt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cca::FaultFlag;
    use crate::requirements::HomeNetwork;

    fn reqs() -> RequirementSet {
        RequirementSet::new(16.0, 30.0, 0.05).unwrap()
    }

    fn quick_evaluator(seed: u64) -> Evaluator {
        let scenarios = Evaluator::new(reqs(), &HomeNetwork::new(60.0).unwrap(), seed)
            .scenarios
            .into_iter()
            .map(|(g, s)| (g, s.with_timing(12.0, 3.0)))
            .collect();
        Evaluator::new(reqs(), &HomeNetwork::new(60.0).unwrap(), seed).with_scenarios(scenarios)
    }

    #[test]
    fn config_defaults_and_bounds() {
        let c = RefinerConfig::default();
        assert_eq!((c.temperature, c.pool_size, c.max_iterations), (0.5, 5, 5));
        assert!(c.validate().is_ok());
        assert!(RefinerConfig { pool_size: 0, ..c.clone() }.validate().is_err());
        assert!(RefinerConfig { temperature: 2.5, ..c.clone() }.validate().is_err());
        assert!(RefinerConfig { max_iterations: 0, ..c }.validate().is_err());
    }

    #[test]
    fn fault_plan_merges() {
        let plan = FaultPlan {
            every: [FaultFlag::R1Fault].into(),
            per_candidate: BTreeMap::from([(1, [FaultFlag::CompileFault].into())]),
            persistent: false,
        };
        assert_eq!(plan.faults_for(0), FaultSet::from([FaultFlag::R1Fault]));
        assert_eq!(plan.faults_for(1), FaultSet::from([FaultFlag::R1Fault, FaultFlag::CompileFault]));
        assert!(FaultPlan::default().is_empty());
    }

    #[test]
    fn best_breaks_ties_by_lowest_id() {
        let mut cs: Vec<Candidate> = (0..3)
            .map(|i| Candidate::from_profile(i, ControlProfile::from_requirements(BaseCca::Reno, &reqs(), 1.0)))
            .collect();
        for (c, s) in cs.iter_mut().zip([80, 100, 100]) {
            c.report = Some(crate::evaluator::score_and_feedback(
                crate::evaluator::CheckResult::pass(),
                None,
                BTreeMap::new(),
            ));
            c.report.as_mut().unwrap().score = s;
        }
        cs.reverse();
        assert_eq!(best_of(&cs).unwrap().id, 1);
    }

    #[test]
    fn clean_reference_run_succeeds_immediately() {
        let cfg = RefinerConfig { pool_size: 2, ..RefinerConfig::default() };
        let out = run_loop(&reqs(), BaseCca::Cubic, &cfg, &ReferenceRefiner, &quick_evaluator(4)).unwrap();
        assert_eq!(out.history.status, Some(RunStatus::Succeeded));
        assert_eq!(out.history.iterations.len(), 1);
        assert_eq!(out.best.score(), Some(100));
    }

    #[test]
    fn persistent_fault_exhausts() {
        let plan = FaultPlan { every: [FaultFlag::CompileFault].into(), persistent: true, ..FaultPlan::default() };
        let cfg = RefinerConfig { pool_size: 1, max_iterations: 1, fault_plan: plan, ..RefinerConfig::default() };
        let out = run_loop(&reqs(), BaseCca::Reno, &cfg, &ReferenceRefiner, &quick_evaluator(1)).unwrap();
        assert_eq!(out.history.status, Some(RunStatus::Exhausted));
        assert_eq!(out.history.best_scores(), vec![0, 0]);
        assert_eq!(out.candidates.len(), 2);
        assert_eq!(out.candidates[1].parent_id, Some(0));
        assert!(out.best.score().unwrap() < 100);
    }

    struct Broken;

    impl Refiner for Broken {
        fn generate_pool(&self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<Vec<Candidate>, RefineError> {
            let mut pool = ReferenceRefiner.generate_pool(prompt, cfg)?;
            pool.truncate(1);
            Err(RefineError::RefinerUnavailable { message: "connection refused".into(), partial: pool })
        }

        fn refine_one(&self, _: &Candidate, _: &Prompt, _: &RefinerConfig, _: u32, _: u32) -> Result<Candidate, RefineError> {
            unreachable!()
        }
    }

    #[test]
    fn refiner_failure_keeps_partial_pool() {
        let err = run_loop(&reqs(), BaseCca::Reno, &RefinerConfig::default(), &Broken, &quick_evaluator(1)).unwrap_err();
        match err {
            LoopError::RefinerUnavailable { candidates, history, .. } => {
                assert_eq!(candidates.len(), 1);
                assert!(history.iterations.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }
}

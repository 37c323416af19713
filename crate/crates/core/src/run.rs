//! Run directories.
//!
//! ```text
//! <run>/manifest.json
//! <run>/best.bpf.c
//! <run>/candidates/cand-NNNN.bpf.c   source as produced
//! <run>/candidates/cand-NNNN.json    candidate with report and conversation
//! <run>/history.json
//! <run>/history.tsv
//! <run>/pool_curve.tsv
//! <run>/score_cdf.tsv
//! <run>/measurements.tsv
//! <run>/prompts/initial.txt          with prompt dumping
//! <run>/prompts/cand-NNNN.txt        feedback turn that produced a child
//! ```

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cca::BaseCca;
use crate::evaluator::Backend;
use crate::prompting::{feedback_turn, Prompt};
use crate::refinery::{Candidate, RefinerConfig, RunHistory, RunStatus};
use crate::reporting::{cdf_tsv, history_tsv, measurements_tsv, pool_curve_tsv, pool_size_curve, score_cdf};
use crate::requirements::{HomeNetwork, RequirementSet};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io { path: path.display().to_string(), source }
}

/// Requirement document written by the wizard.
///
/// ```text
/// [requirements]
/// r1_min_throughput_mbps = 16.0
/// r2_max_throughput_mbps = 40.0
/// r3_loss_threshold = 0.05
///
/// [network]
/// upload_speed_mbps = 80.0
/// share_fraction = 0.5
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streaming: Option<String>,
    pub requirements: RequirementSet,
    pub network: HomeNetwork,
}

impl RequirementFile {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("requirement file serializes")
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let f: RequirementFile = toml::from_str(text).map_err(|e| e.message().to_string())?;
        f.network.validate().map_err(|e| e.to_string())?;
        f.requirements.validate_for(&f.network).map_err(|e| e.to_string())?;
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self, ArtifactError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_text(&text).map_err(|message| ArtifactError::Format { path: path.display().to_string(), message })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub requirements: RequirementSet,
    pub network: HomeNetwork,
    pub base_cca: BaseCca,
    pub config: RefinerConfig,
    pub eval_backend: Backend,
    pub seed: u64,
    /// `None` when the refiner failed before the loop finished.
    pub status: Option<RunStatus>,
    pub best_candidate: Option<u32>,
    pub best_score: Option<u32>,
    #[serde(default)]
    pub error: Option<String>,
    /// Paths relative to the run directory, sorted.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self, ArtifactError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text).map_err(|e| ArtifactError::Format { path: path.display().to_string(), message: e.to_string() })
    }
}

pub fn candidate_stem(id: u32) -> String {
    format!("cand-{id:04}")
}

pub fn read_candidate(path: &Path) -> Result<Candidate, ArtifactError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ArtifactError::Format { path: path.display().to_string(), message: e.to_string() })
}

pub fn candidate_json(c: &Candidate) -> String {
    let mut s = serde_json::to_string_pretty(c).expect("candidate serializes");
    s.push('\n');
    s
}

struct Writer<'a> {
    root: &'a Path,
    written: BTreeMap<String, ()>,
}

impl Writer<'_> {
    fn put(&mut self, rel: &str, body: &str) -> Result<(), ArtifactError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        std::fs::write(&path, body).map_err(io_err(&path))?;
        self.written.insert(rel.to_string(), ());
        Ok(())
    }
}

/// Writes every artifact of a run under `dir` and then the manifest, whose
/// artifact list is filled in here. `extra` names files already placed in
/// `dir` by the caller.
pub fn write_run(
    dir: &Path,
    manifest: &mut RunManifest,
    candidates: &[Candidate],
    history: &RunHistory,
    prompt: Option<&Prompt>,
    extra: &[String],
) -> Result<(), ArtifactError> {
    let mut w = Writer { root: dir, written: BTreeMap::new() };
    let by_id: BTreeMap<u32, &Candidate> = candidates.iter().map(|c| (c.id, c)).collect();
    for c in candidates {
        let stem = candidate_stem(c.id);
        w.put(&format!("candidates/{stem}.bpf.c"), &c.source_text)?;
        w.put(&format!("candidates/{stem}.json"), &candidate_json(c))?;
        if let (Some(_), Some(parent)) = (prompt, c.parent_id.and_then(|p| by_id.get(&p))) {
            if let Some(report) = &parent.report {
                w.put(&format!("prompts/{stem}.txt"), &feedback_turn(report))?;
            }
        }
    }
    if let Some(p) = prompt {
        w.put("prompts/initial.txt", &p.render())?;
    }
    if let Some(best) = manifest.best_candidate.and_then(|id| by_id.get(&id)) {
        w.put("best.bpf.c", &best.source_text)?;
    }
    let mut h = serde_json::to_string_pretty(history).expect("history serializes");
    h.push('\n');
    w.put("history.json", &h)?;
    w.put("history.tsv", &history_tsv(history))?;
    let initial = history.initial();
    if !initial.is_empty() {
        let curve = pool_size_curve(history, initial.len()).expect("full initial pool");
        w.put("pool_curve.tsv", &pool_curve_tsv(&curve))?;
        let scores: Vec<u32> = initial.iter().map(|c| c.score).collect();
        w.put("score_cdf.tsv", &cdf_tsv(&score_cdf(&scores).expect("non-empty")))?;
    }
    w.put("measurements.tsv", &measurements_tsv(candidates))?;
    for e in extra {
        w.written.insert(e.clone(), ());
    }
    manifest.artifacts = w.written.into_keys().collect();
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest() -> RunManifest {
        RunManifest {
            requirements: RequirementSet::new(16.0, 40.0, 0.05).unwrap(),
            network: HomeNetwork::new(80.0).unwrap(),
            base_cca: BaseCca::Cubic,
            config: RefinerConfig::default(),
            eval_backend: Backend::Simulated,
            seed: 7,
            status: Some(RunStatus::Exhausted),
            best_candidate: Some(3),
            best_score: Some(80),
            error: None,
            artifacts: vec!["history.json".into()],
        }
    }

    #[test]
    fn manifest_round_trips() {
        let m = manifest();
        assert_eq!(RunManifest::from_json(&m.to_json()).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, m.to_json()).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);
    }

    #[test]
    fn requirement_file_round_trips_and_validates() {
        let f = RequirementFile {
            streaming: Some("2K resolution 60fps streaming".into()),
            requirements: RequirementSet::new(16.0, 40.0, 0.05).unwrap(),
            network: HomeNetwork::new(80.0).unwrap(),
        };
        assert_eq!(RequirementFile::from_text(&f.to_text()).unwrap(), f);
        let bad = f.to_text().replace("r2_max_throughput_mbps = 40.0", "r2_max_throughput_mbps = 10.0");
        assert!(RequirementFile::from_text(&bad).unwrap_err().contains("infeasible"));
    }
}

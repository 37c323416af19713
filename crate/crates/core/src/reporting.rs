//! Tabular summaries of runs.
//!
//! Every table is tab separated with a one-line header:
//!
//! | table          | columns                                                                 |
//! |----------------|-------------------------------------------------------------------------|
//! | score CDF      | `score cdf`                                                             |
//! | pool curve     | `n best_score cumulative_dollars`                                       |
//! | history        | `iteration candidate parent score dollars best_score cumulative_dollars` |
//! | measurements   | `candidate group bottleneck_mbps rtt_ms competing_flows random_loss_rate seed measured_mbps loss_rate base_mbps limit_mbps passed` |

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::refinery::{Candidate, RunHistory};

/// Scores the ladder can produce.
pub const LADDER: [u32; 6] = [0, 20, 40, 60, 80, 100];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("no scores to summarize")]
    EmptyDistribution,
    #[error("score {0} is outside 0..=100")]
    InvalidScore(u32),
    #[error("history has {available} initial candidates, {requested} requested")]
    Range { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub scores: Vec<u32>,
    /// `(x, P(X <= x))` at each ladder point.
    pub cdf: Vec<(u32, f64)>,
}

pub fn score_cdf(scores: &[u32]) -> Result<ScoreDistribution, ReportError> {
    if scores.is_empty() {
        return Err(ReportError::EmptyDistribution);
    }
    if let Some(&bad) = scores.iter().find(|&&s| s > 100) {
        return Err(ReportError::InvalidScore(bad));
    }
    let n = scores.len() as f64;
    let cdf = LADDER.iter().map(|&x| (x, scores.iter().filter(|&&s| s <= x).count() as f64 / n)).collect();
    let mut sorted = scores.to_vec();
    sorted.sort_unstable();
    Ok(ScoreDistribution { scores: sorted, cdf })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolPoint {
    pub n: usize,
    pub best_score: u32,
    pub cumulative_dollars: f64,
}

/// Best score and spend of the first `n` initial candidates, `n = 1..=n_max`.
pub fn pool_size_curve(history: &RunHistory, n_max: usize) -> Result<Vec<PoolPoint>, ReportError> {
    let initial = history.initial();
    if n_max > initial.len() {
        return Err(ReportError::Range { requested: n_max, available: initial.len() });
    }
    let mut best = 0;
    let mut dollars = 0.0;
    Ok(initial[..n_max]
        .iter()
        .enumerate()
        .map(|(i, c)| {
            best = best.max(c.score);
            dollars += c.dollars;
            PoolPoint { n: i + 1, best_score: best, cumulative_dollars: dollars }
        })
        .collect())
}

pub fn cdf_tsv(d: &ScoreDistribution) -> String {
    let mut t = String::from("score\tcdf\n");
    for (x, f) in &d.cdf {
        writeln!(t, "{x}\t{f:.6}").unwrap();
    }
    t
}

pub fn pool_curve_tsv(points: &[PoolPoint]) -> String {
    let mut t = String::from("n\tbest_score\tcumulative_dollars\n");
    for p in points {
        writeln!(t, "{}\t{}\t{:.6}", p.n, p.best_score, p.cumulative_dollars).unwrap();
    }
    t
}

pub fn history_tsv(h: &RunHistory) -> String {
    let mut t = String::from("iteration\tcandidate\tparent\tscore\tdollars\tbest_score\tcumulative_dollars\n");
    for r in &h.iterations {
        for c in &r.evaluated {
            let parent = c.parent_id.map(|p| p.to_string()).unwrap_or_else(|| "-".into());
            writeln!(
                t,
                "{}\t{}\t{parent}\t{}\t{:.6}\t{}\t{:.6}",
                r.iteration, c.id, c.score, c.dollars, r.best_score, r.cumulative_dollars
            )
            .unwrap();
        }
    }
    t
}

pub fn measurements_tsv(candidates: &[Candidate]) -> String {
    let mut t = String::from(
        "candidate\tgroup\tbottleneck_mbps\trtt_ms\tcompeting_flows\trandom_loss_rate\tseed\tmeasured_mbps\t\
         loss_rate\tbase_mbps\tlimit_mbps\tpassed\n",
    );
    for c in candidates {
        let Some(report) = &c.report else { continue };
        for (g, r) in &report.perf_groups {
            for m in &r.measurements {
                let s = &m.scenario;
                let base = m.base_mbps.map(|b| format!("{b:.4}")).unwrap_or_else(|| "-".into());
                writeln!(
                    t,
                    "{}\t{g}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{:.6}\t{base}\t{:.4}\t{}",
                    c.id,
                    s.bottleneck_mbps,
                    s.rtt_ms,
                    s.competing_flows,
                    s.random_loss_rate,
                    s.seed,
                    m.measured_mbps,
                    m.loss_rate,
                    m.limit_mbps,
                    m.passed
                )
                .unwrap();
            }
        }
    }
    t
}

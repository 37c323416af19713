use crate::cca::{ControlProfile, FaultFlag};
use crate::evaluator::FeedbackTag;
use crate::prompting::Prompt;

use super::{Candidate, RefineError, Refiner, RefinerConfig};

/// Multiplier applied to `boost_gain` on R1 feedback.
pub const F3_GAIN_STEP: f64 = 1.25;
/// Multiplier applied to `cap_margin` on R2 feedback.
pub const CAP_MARGIN_STEP: f64 = 0.9;

/// `boost_gain` of initial candidate `index`: 1.1, 1.2, ... 1.5, repeating.
pub fn reference_gain(index: u32) -> f64 {
    1.1 + 0.1 * (index % 5) as f64
}

/// Deterministic refiner that renders requirement-derived profiles and
/// repairs exactly what the feedback names.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceRefiner;

impl Refiner for ReferenceRefiner {
    fn generate_pool(&self, prompt: &Prompt, cfg: &RefinerConfig) -> Result<Vec<Candidate>, RefineError> {
        cfg.validate()?;
        let reqs = prompt.requirements;
        Ok((0..cfg.pool_size)
            .map(|i| {
                let p = ControlProfile::from_requirements(prompt.base, &reqs, reference_gain(i))
                    .with_faults(cfg.fault_plan.faults_for(i));
                Candidate::from_profile(i, p)
            })
            .collect())
    }

    fn refine_one(
        &self,
        parent: &Candidate,
        _prompt: &Prompt,
        cfg: &RefinerConfig,
        child_id: u32,
        iteration: u32,
    ) -> Result<Candidate, RefineError> {
        let report = parent
            .report
            .as_ref()
            .ok_or_else(|| RefineError::InvalidConfig(format!("candidate {} is unevaluated", parent.id)))?;
        let mut p = parent
            .control_profile
            .clone()
            .ok_or_else(|| RefineError::InvalidConfig(format!("candidate {} has no control profile", parent.id)))?;
        let mut drop = |flag: FaultFlag| {
            if p.has_fault(flag) {
                if !cfg.fault_plan.persistent {
                    p.fault_flags.remove(&flag);
                }
                true
            } else {
                false
            }
        };
        let mut gain = false;
        let mut margin = false;
        for f in &report.feedback {
            match f.tag {
                FeedbackTag::F1 => {
                    drop(FaultFlag::CompileFault);
                }
                FeedbackTag::F2 => {
                    drop(FaultFlag::BpfFault);
                }
                FeedbackTag::F3 => gain = !drop(FaultFlag::R1Fault),
                FeedbackTag::F4 => margin = !drop(FaultFlag::R2Fault),
                FeedbackTag::F5 => {
                    drop(FaultFlag::R3Fault);
                }
            }
        }
        if gain {
            p.boost_gain *= F3_GAIN_STEP;
        }
        if margin {
            p.cap_margin *= CAP_MARGIN_STEP;
        }
        let mut child = Candidate::from_profile(child_id, p);
        child.iteration_born = iteration;
        child.parent_id = Some(parent.id);
        Ok(child)
    }
}

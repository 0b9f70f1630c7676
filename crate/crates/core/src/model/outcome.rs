use serde::{Deserialize, Serialize};

use super::{ModelError, Outcome};

/// The five steps of a reproduction attempt, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Clone,
    Checkout,
    Compile,
    Test,
    Observe,
}

impl Step {
    pub const ORDER: [Step; 5] = [Step::Clone, Step::Checkout, Step::Compile, Step::Test, Step::Observe];

    fn failure_bucket(self) -> Outcome {
        match self {
            Step::Clone => Outcome::CloneError,
            Step::Checkout => Outcome::CheckoutError,
            Step::Compile => Outcome::CompileError,
            Step::Test | Step::Observe => Outcome::HarnessError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Succeeded,
    Failed,
    /// Not attempted because an earlier step failed.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub step: Step,
    pub status: StepStatus,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl StepResult {
    pub fn ok(step: Step) -> Self {
        StepResult { step, status: StepStatus::Succeeded, detail: String::new() }
    }

    pub fn failed(step: Step, detail: impl Into<String>) -> Self {
        StepResult { step, status: StepStatus::Failed, detail: detail.into() }
    }

    pub fn skipped(step: Step) -> Self {
        StepResult { step, status: StepStatus::Skipped, detail: String::new() }
    }
}

/// Maps an attempt trace to its taxonomy bucket.
///
/// The trace must mention each of the five steps exactly once (listing order
/// is irrelevant; steps are evaluated in execution order). The first failed
/// step decides the bucket; a fully successful trace is `reproduced` when at
/// least one failing test was observed and `not_reproduced` otherwise.
pub fn classify_outcome(trace: &[StepResult], failing_tests: u32) -> Result<Outcome, ModelError> {
    let mut statuses = [None; 5];
    for entry in trace {
        let slot = &mut statuses[entry.step as usize];
        if slot.is_some() {
            return Err(ModelError::Contract(format!("step {:?} listed twice", entry.step)));
        }
        *slot = Some(entry.status);
    }

    let mut failed_at = None;
    for step in Step::ORDER {
        let status = statuses[step as usize]
            .ok_or_else(|| ModelError::Contract(format!("trace is missing step {step:?}")))?;
        match (failed_at, status) {
            (None, StepStatus::Failed) => failed_at = Some(step),
            (None, StepStatus::Skipped) => {
                return Err(ModelError::Contract(format!(
                    "step {step:?} skipped although no earlier step failed"
                )))
            }
            _ => {}
        }
    }

    Ok(match failed_at {
        Some(step) => step.failure_bucket(),
        None if failing_tests >= 1 => Outcome::Reproduced,
        None => Outcome::NotReproduced,
    })
}

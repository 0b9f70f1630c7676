//! Domain types shared by every pipeline stage.
//!
//! All values here are immutable once built and carry their own invariant
//! checks (`validate`). The archive rejects any payload that fails them.

mod outcome;
mod signature;
mod time;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use outcome::{classify_outcome, Step, StepResult, StepStatus};
pub use signature::{extract_signature, is_npe_family, FailureSignature};
pub use time::{duration_ms, TimeWindow, Timestamp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("cannot parse failure signature: {0}")]
    Signature(String),
    #[error("invalid {kind}: {reason}")]
    Invariant { kind: &'static str, reason: String },
}

fn invariant(kind: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::Invariant {
        kind,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuildTool {
    MavenLike,
    GradleLike,
    FixtureMinibuild,
    Unknown,
}

impl fmt::Display for BuildTool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuildTool::MavenLike => "maven-like",
            BuildTool::GradleLike => "gradle-like",
            BuildTool::FixtureMinibuild => "fixture-minibuild",
            BuildTool::Unknown => "unknown",
        })
    }
}

impl std::str::FromStr for BuildTool {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "maven-like" => Ok(BuildTool::MavenLike),
            "gradle-like" => Ok(BuildTool::GradleLike),
            "fixture-minibuild" => Ok(BuildTool::FixtureMinibuild),
            "unknown" => Ok(BuildTool::Unknown),
            other => Err(format!("unknown build tool `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectRef {
    pub host_id: String,
    pub slug: String,
    pub default_branch: String,
    pub stars: u64,
    pub last_activity: Timestamp,
    pub language_tag: String,
    pub build_tool_tag: BuildTool,
    pub ci_enabled: bool,
}

impl ProjectRef {
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut parts = self.slug.split('/');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(owner), Some(name), None) if !owner.is_empty() && !name.is_empty() => Ok(()),
            _ => Err(invariant(
                "ProjectRef",
                format!("slug `{}` must look like owner/name", self.slug),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Push,
    PullRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiStatus {
    Passed,
    Failed,
    Errored,
    Canceled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildRecord {
    pub build_id: String,
    pub project: ProjectRef,
    pub trigger: Trigger,
    pub commit_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_base_commit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_head_commit: Option<String>,
    pub ci_status: CiStatus,
    pub finished_at: Timestamp,
    pub log_handle: String,
    /// Failing-test count reported by the CI service itself, when it offers one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_failing_tests: Option<u32>,
}

impl BuildRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.project.validate()?;
        if self.build_id.is_empty() {
            return Err(invariant("BuildRecord", "empty build_id"));
        }
        let has_base = self.pr_base_commit.is_some();
        let has_head = self.pr_head_commit.is_some();
        match self.trigger {
            Trigger::PullRequest if !(has_base && has_head) => Err(invariant(
                "BuildRecord",
                format!("pull request build {} lacks base/head commits", self.build_id),
            )),
            Trigger::Push if has_base || has_head => Err(invariant(
                "BuildRecord",
                format!("push build {} carries pull request commits", self.build_id),
            )),
            _ => Ok(()),
        }
    }

    pub fn is_pull_request(&self) -> bool {
        self.trigger == Trigger::PullRequest
    }
}

/// The six-way partition of reproduction attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Reproduced,
    CloneError,
    CheckoutError,
    CompileError,
    HarnessError,
    NotReproduced,
}

impl Outcome {
    pub const ALL: [Outcome; 6] = [
        Outcome::Reproduced,
        Outcome::CloneError,
        Outcome::CheckoutError,
        Outcome::CompileError,
        Outcome::HarnessError,
        Outcome::NotReproduced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Reproduced => "reproduced",
            Outcome::CloneError => "clone_error",
            Outcome::CheckoutError => "checkout_error",
            Outcome::CompileError => "compile_error",
            Outcome::HarnessError => "harness_error",
            Outcome::NotReproduced => "not_reproduced",
        }
    }

    pub fn index(self) -> usize {
        Outcome::ALL.iter().position(|o| *o == self).unwrap()
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproductionResult {
    pub build: BuildRecord,
    pub outcome: Outcome,
    pub tests_run: u32,
    pub tests_failed: u32,
    pub signatures: Vec<FailureSignature>,
    #[serde(with = "duration_ms")]
    pub wall_time: Duration,
    pub workspace_id: String,
}

impl ReproductionResult {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.build.validate()?;
        let reproduced = self.outcome == Outcome::Reproduced;
        if reproduced != (self.tests_failed >= 1) {
            return Err(invariant(
                "ReproductionResult",
                format!(
                    "outcome {} inconsistent with {} failing tests",
                    self.outcome, self.tests_failed
                ),
            ));
        }
        let early = matches!(
            self.outcome,
            Outcome::CloneError | Outcome::CheckoutError | Outcome::CompileError
        );
        if early && self.tests_run != 0 {
            return Err(invariant(
                "ReproductionResult",
                format!("{} attempt reports {} tests run", self.outcome, self.tests_run),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverfittingFlag {
    ConstantPredicate,
    SyntacticTautology,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchCandidate {
    pub patch_id: String,
    pub build_id: String,
    pub tool_name: String,
    /// Unified diff against the reproduced source tree.
    pub edit: String,
    pub adequate: bool,
    pub overfitting_flags: BTreeSet<OverfittingFlag>,
    pub created_at: Timestamp,
}

impl PatchCandidate {
    /// Number of real overfitting signals (the `none` marker does not count).
    pub fn flag_count(&self) -> usize {
        self.overfitting_flags
            .iter()
            .filter(|f| **f != OverfittingFlag::None)
            .count()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.patch_id.is_empty() || self.build_id.is_empty() {
            return Err(invariant("PatchCandidate", "missing patch or build id"));
        }
        if self.overfitting_flags.contains(&OverfittingFlag::None)
            && self.overfitting_flags.len() > 1
        {
            return Err(invariant("PatchCandidate", "`none` mixed with real flags"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pending,
    Correct,
    Overfitting,
    DuplicateHumanFix,
}

impl Verdict {
    pub fn can_transition_to(self, next: Verdict) -> bool {
        self == Verdict::Pending && next != Verdict::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageVerdict {
    pub patch_id: String,
    pub verdict: Verdict,
    pub analyst_id: String,
    pub note: String,
    pub decided_at: Timestamp,
}

impl TriageVerdict {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.verdict == Verdict::Pending {
            return Err(invariant("TriageVerdict", "a recorded verdict cannot be pending"));
        }
        Ok(())
    }
}

/// Per-project counters backing the tabular reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectCounters {
    pub builds: u64,
    pub interesting: u64,
    pub interesting_pr: u64,
    pub attempts: u64,
    pub reproduced: u64,
    pub patched_builds: u64,
    pub patches_by_tool: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStatistics {
    pub run_id: String,
    pub window_start: Timestamp,
    pub window_end: Timestamp,
    pub builds_collected: u64,
    pub ci_failing: u64,
    pub interesting: u64,
    /// Indexed like [`Outcome::ALL`].
    pub outcomes: [u64; 6],
    pub patches_found: u64,
    pub patched_builds: u64,
    pub per_project: BTreeMap<String, ProjectCounters>,
    pub per_signature: BTreeMap<String, u64>,
}

impl RunStatistics {
    pub fn empty(run_id: impl Into<String>, window: TimeWindow) -> Self {
        RunStatistics {
            run_id: run_id.into(),
            window_start: window.start,
            window_end: window.end,
            builds_collected: 0,
            ci_failing: 0,
            interesting: 0,
            outcomes: [0; 6],
            patches_found: 0,
            patched_builds: 0,
            per_project: BTreeMap::new(),
            per_signature: BTreeMap::new(),
        }
    }

    pub fn attempts(&self) -> u64 {
        self.outcomes.iter().sum()
    }

    pub fn outcome_count(&self, outcome: Outcome) -> u64 {
        self.outcomes[outcome.index()]
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.interesting <= self.ci_failing && self.ci_failing <= self.builds_collected) {
            return Err(invariant(
                "RunStatistics",
                format!(
                    "expected interesting {} <= ci_failing {} <= collected {}",
                    self.interesting, self.ci_failing, self.builds_collected
                ),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn project(slug: &str) -> ProjectRef {
        ProjectRef {
            host_id: "1".into(),
            slug: slug.into(),
            default_branch: "master".into(),
            stars: 10,
            last_activity: Timestamp::from_unix(0),
            language_tag: "minilang".into(),
            build_tool_tag: BuildTool::FixtureMinibuild,
            ci_enabled: true,
        }
    }

    fn build(trigger: Trigger, base: Option<&str>, head: Option<&str>) -> BuildRecord {
        BuildRecord {
            build_id: "b1".into(),
            project: project("acme/widgets"),
            trigger,
            commit_id: "c".into(),
            pr_base_commit: base.map(String::from),
            pr_head_commit: head.map(String::from),
            ci_status: CiStatus::Failed,
            finished_at: Timestamp::from_unix(0),
            log_handle: "b1.log".into(),
            ci_failing_tests: None,
        }
    }

    #[test]
    fn slug_needs_exactly_one_separator() {
        assert!(project("a/b").validate().is_ok());
        assert!(project("ab").validate().is_err());
        assert!(project("a/b/c").validate().is_err());
        assert!(project("/b").validate().is_err());
    }

    #[test]
    fn trigger_determines_pr_commits() {
        assert!(build(Trigger::Push, None, None).validate().is_ok());
        assert!(build(Trigger::PullRequest, Some("b"), Some("h")).validate().is_ok());
        assert!(build(Trigger::PullRequest, Some("b"), None).validate().is_err());
        assert!(build(Trigger::Push, Some("b"), None).validate().is_err());
    }

    #[test]
    fn reproduction_invariants() {
        let mut r = ReproductionResult {
            build: build(Trigger::Push, None, None),
            outcome: Outcome::Reproduced,
            tests_run: 3,
            tests_failed: 1,
            signatures: vec![],
            wall_time: Duration::from_millis(5),
            workspace_id: "ws".into(),
        };
        assert!(r.validate().is_ok());
        r.tests_failed = 0;
        assert!(r.validate().is_err());
        r.outcome = Outcome::CompileError;
        assert!(r.validate().is_err(), "compile errors run no tests");
        r.tests_run = 0;
        assert!(r.validate().is_ok());
    }

    #[test]
    fn verdicts_only_leave_pending() {
        assert!(Verdict::Pending.can_transition_to(Verdict::Correct));
        assert!(!Verdict::Pending.can_transition_to(Verdict::Pending));
        assert!(!Verdict::Correct.can_transition_to(Verdict::Overfitting));
        assert!(!Verdict::Overfitting.can_transition_to(Verdict::Pending));
    }

    #[test]
    fn serialized_names_are_stable() {
        assert_eq!(serde_json::to_string(&Outcome::NotReproduced).unwrap(), "\"not_reproduced\"");
        assert_eq!(
            serde_json::to_string(&BuildTool::FixtureMinibuild).unwrap(),
            "\"fixture-minibuild\""
        );
        assert_eq!(
            serde_json::to_string(&OverfittingFlag::ConstantPredicate).unwrap(),
            "\"constant_predicate\""
        );
    }
}

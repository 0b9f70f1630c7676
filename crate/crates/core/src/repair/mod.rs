//! Repair engine: runs the repair tools chosen for a reproduced failure
//! against its workspace and turns their output into patch candidates.

mod external;
mod npe;
mod ochiai;
mod subject;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{is_npe_family, FailureSignature, Outcome, OverfittingFlag, PatchCandidate, ReproductionResult, Timestamp};
use crate::reproducer::Workspace;

pub use external::{external_repair, invoke, ToolPatch, ToolRequest, ToolResponse, DEFAULT_TOOL_TIMEOUT};
pub use npe::{dereferences, npe_guard_repair, null_base};
pub use ochiai::{ochiai, ochiai_score, CoverageMatrix, Spectrum};
pub use subject::{Subject, Validation};
pub use synth::{
    condition_synth_repair, consistent, flag_overfitting, install, label_snapshots, suspects, truth, LabeledSnapshot,
    TemplateSpace, MAX_SPACE,
};

pub const NPE_GUARD: &str = "npe-guard";
pub const CONDITION_SYNTH: &str = "condition-synth";

#[derive(Debug, Error)]
pub enum RepairError {
    #[error("multi-module projects are not supported (modules: {})", .0.join(", "))]
    MultiModule(Vec<String>),
    #[error("cannot load project: {0}")]
    Load(String),
    #[error("build {0} was not reproduced")]
    NotReproduced(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Statements considered by condition synthesis.
    pub top_k: usize,
    /// Adequate patches kept per tool.
    pub max_patches: usize,
    /// Label-consistent predicates validated per build.
    pub max_validations: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { top_k: 10, max_patches: 50, max_validations: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ToolKind {
    NpeGuard,
    ConditionSynth,
    External {
        command: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
}

fn default_timeout_secs() -> u64 {
    DEFAULT_TOOL_TIMEOUT.as_secs()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ToolKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRegistry {
    pub tools: Vec<ToolSpec>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        ToolRegistry {
            tools: vec![
                ToolSpec { name: NPE_GUARD.into(), kind: ToolKind::NpeGuard },
                ToolSpec { name: CONDITION_SYNTH.into(), kind: ToolKind::ConditionSynth },
            ],
        }
    }
}

impl ToolRegistry {
    pub fn with_external(mut self, name: &str, command: &str, timeout: Duration) -> Self {
        self.tools.push(ToolSpec {
            name: name.into(),
            kind: ToolKind::External { command: command.into(), timeout_secs: timeout.as_secs().max(1) },
        });
        self
    }
}

/// The failure type used to pick tools: the first null-dereference
/// signature if there is one, otherwise the first signature.
pub fn failure_type(signatures: &[FailureSignature]) -> String {
    signatures
        .iter()
        .find(|s| is_npe_family(&s.exception_type))
        .or(signatures.first())
        .map(|s| s.exception_type.clone())
        .unwrap_or_default()
}

/// Tools in the order they run. The null guard only applies to
/// null-dereference failures.
pub fn select_tools<'r>(failure_type: &str, registry: &'r ToolRegistry) -> Vec<&'r ToolSpec> {
    let npe = is_npe_family(failure_type);
    let rank = |t: &ToolSpec| match t.kind {
        ToolKind::NpeGuard => 0,
        ToolKind::ConditionSynth => 1,
        ToolKind::External { .. } => 2,
    };
    let mut tools: Vec<&ToolSpec> =
        registry.tools.iter().filter(|t| npe || t.kind != ToolKind::NpeGuard).collect();
    tools.sort_by_key(|t| rank(t));
    tools
}

/// A patch produced by a tool and validated against the test suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub tool: String,
    pub diff: String,
    pub adequate: bool,
    pub flags: BTreeSet<OverfittingFlag>,
    pub stmt: Option<u32>,
    pub predicate: Option<String>,
    pub note: String,
}

impl Candidate {
    pub fn into_patch(self, build_id: &str, created_at: Timestamp) -> PatchCandidate {
        PatchCandidate {
            patch_id: patch_id(build_id, &self.diff),
            build_id: build_id.to_string(),
            tool_name: self.tool,
            edit: self.diff,
            adequate: self.adequate,
            overfitting_flags: self.flags,
            created_at,
        }
    }
}

/// Content address of a patch: equal for the same diff on the same build.
pub fn patch_id(build_id: &str, diff: &str) -> String {
    let mut h = Sha256::new();
    h.update(build_id.as_bytes());
    h.update(b"\n");
    h.update(diff.as_bytes());
    hex::encode(&h.finalize()[..12])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRun {
    pub tool: String,
    pub candidates: usize,
    pub adequate: usize,
    pub diagnostics: Vec<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairReport {
    pub build_id: String,
    pub failure_type: String,
    pub runs: Vec<ToolRun>,
    /// Every distinct candidate, adequate or not, in production order.
    pub patches: Vec<PatchCandidate>,
    /// Tool-specific detail per patch id: statement, predicate, note.
    pub notes: BTreeMap<String, String>,
}

impl RepairReport {
    pub fn adequate(&self) -> impl Iterator<Item = &PatchCandidate> {
        self.patches.iter().filter(|p| p.adequate)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RepairEngine {
    pub registry: ToolRegistry,
    pub limits: Limits,
    /// Environment variables visible to the program, as in the reproducer.
    pub local_env: BTreeMap<String, i64>,
}

impl RepairEngine {
    pub fn new(registry: ToolRegistry) -> Self {
        RepairEngine { registry, ..RepairEngine::default() }
    }

    /// Runs the selected tools on a reproduced failure. Tools that fail
    /// leave a diagnostic and no patches; the others still run.
    pub fn repair(
        &self,
        result: &ReproductionResult,
        workspace: &Workspace,
        now: Timestamp,
    ) -> Result<RepairReport, RepairError> {
        if result.outcome != Outcome::Reproduced {
            return Err(RepairError::NotReproduced(result.build.build_id.clone()));
        }
        let subject = Subject::load(&workspace.source_dir, &self.local_env)?;
        Ok(self.repair_subject(&result.build.build_id, &result.signatures, &subject, Some(workspace), now))
    }

    pub fn repair_subject(
        &self,
        build_id: &str,
        signatures: &[FailureSignature],
        subject: &Subject,
        workspace: Option<&Workspace>,
        now: Timestamp,
    ) -> RepairReport {
        let ftype = failure_type(signatures);
        let mut report = RepairReport {
            build_id: build_id.to_string(),
            failure_type: ftype.clone(),
            runs: Vec::new(),
            patches: Vec::new(),
            notes: BTreeMap::new(),
        };
        let mut seen = HashSet::new();
        for tool in select_tools(&ftype, &self.registry) {
            let start = Instant::now();
            let (candidates, diagnostics) = match (&tool.kind, workspace) {
                (ToolKind::NpeGuard, _) => {
                    let o = npe_guard_repair(subject, &self.limits);
                    (o.candidates, o.diagnostics)
                }
                (ToolKind::ConditionSynth, _) => {
                    let o = condition_synth_repair(subject, &self.limits);
                    (o.candidates, o.diagnostics)
                }
                (ToolKind::External { command, timeout_secs }, Some(ws)) => {
                    let timeout = Duration::from_secs(*timeout_secs);
                    let o = external_repair(&tool.name, command, timeout, subject, ws, &ftype, &self.limits);
                    (o.candidates, o.diagnostics)
                }
                (ToolKind::External { .. }, None) => (Vec::new(), vec!["external tools need a workspace".into()]),
            };
            let run = ToolRun {
                tool: tool.name.clone(),
                candidates: candidates.len(),
                adequate: candidates.iter().filter(|c| c.adequate).count(),
                diagnostics,
                elapsed_ms: start.elapsed().as_millis() as u64,
            };
            for c in candidates {
                let mut detail = c.note.clone();
                if let Some(p) = &c.predicate {
                    detail = format!("{detail} [predicate {p}]");
                }
                let p = c.into_patch(build_id, now);
                if seen.insert(p.patch_id.clone()) {
                    report.notes.insert(p.patch_id.clone(), detail);
                    report.patches.push(p);
                }
            }
            for d in &run.diagnostics {
                log::debug!("{build_id}: {}: {d}", tool.name);
            }
            report.runs.push(run);
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_selection_by_failure_type() {
        let reg = ToolRegistry::default().with_external("echo", "cat", Duration::from_secs(5));
        let names = |t: &str| select_tools(t, &reg).iter().map(|s| s.name.clone()).collect::<Vec<_>>();
        assert_eq!(names("NullDeref"), ["npe-guard", "condition-synth", "echo"]);
        assert_eq!(names("java.lang.NullPointerException"), ["npe-guard", "condition-synth", "echo"]);
        assert_eq!(names("AssertionFailed"), ["condition-synth", "echo"]);
    }

    #[test]
    fn failure_type_prefers_null_dereference() {
        let sig = |t: &str| FailureSignature { exception_type: t.into(), failing_test_name: "t".into(), detail: String::new() };
        assert_eq!(failure_type(&[sig("AssertionFailed"), sig("NullDeref")]), "NullDeref");
        assert_eq!(failure_type(&[sig("AssertionFailed")]), "AssertionFailed");
        assert_eq!(failure_type(&[]), "");
    }

    #[test]
    fn patch_ids_are_content_addressed() {
        assert_eq!(patch_id("b1", "d"), patch_id("b1", "d"));
        assert_ne!(patch_id("b1", "d"), patch_id("b2", "d"));
        assert_ne!(patch_id("b1", "d"), patch_id("b1", "e"));
        assert_eq!(patch_id("b1", "d").len(), 24);
    }

    #[test]
    fn registry_round_trips_through_toml() {
        let reg = ToolRegistry::default().with_external("x", "./tool.sh", Duration::from_secs(30));
        let text = toml::to_string(&reg).unwrap();
        assert_eq!(toml::from_str::<ToolRegistry>(&text).unwrap(), reg);
    }
}

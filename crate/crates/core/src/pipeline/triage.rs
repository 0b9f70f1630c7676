//! The analyst's side: pending queue, verdicts and branch proposals.

use std::collections::HashMap;
use std::fs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Bot;
use crate::archive::{ArchiveError, ArchiveRecord, Payload, ProposalEntry};
use crate::diff::{changed_line_count, parse_patch};
use crate::model::{BuildRecord, PatchCandidate, Timestamp, TriageVerdict, Verdict};
use crate::reproducer::checkout_build;
use crate::vcs;

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("no adequate patch {0}")]
    NotFound(String),
    #[error("patch {patch_id} already has verdict {current:?}")]
    Conflict { patch_id: String, current: Verdict },
    #[error("invalid verdict: {0}")]
    Invalid(String),
    #[error("patch {0} has not been judged correct")]
    Forbidden(String),
    #[error("proposal failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
}

/// An adequate patch with everything the analyst needs to judge it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchView {
    pub patch: PatchCandidate,
    pub status: Verdict,
    pub verdict: Option<TriageVerdict>,
    pub build: Option<BuildRecord>,
    pub note: String,
    pub committed_at: Option<Timestamp>,
    pub attempt_started_at: Timestamp,
    pub proposal: Option<ProposalEntry>,
    pub seq: u64,
}

impl PatchView {
    /// Pending order: fewer flags, older, smaller, first archived.
    pub fn queue_key(&self) -> (usize, Timestamp, usize, u64) {
        (self.patch.flag_count(), self.patch.created_at, changed_line_count(&self.patch.edit), self.seq)
    }
}

pub type QueueItem = PatchView;

/// Every distinct adequate patch in queue order.
pub fn patch_views(records: &[ArchiveRecord]) -> Vec<PatchView> {
    let mut builds: HashMap<&str, &BuildRecord> = HashMap::new();
    let mut views: Vec<PatchView> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut verdicts: HashMap<&str, &TriageVerdict> = HashMap::new();
    let mut proposals: HashMap<&str, &ProposalEntry> = HashMap::new();
    for r in records {
        match &r.payload {
            Payload::Build(b) => {
                builds.insert(&b.build.build_id, &b.build);
            }
            Payload::Reproduction(e) => {
                builds.insert(&e.result.build.build_id, &e.result.build);
            }
            Payload::Patch(p) if p.patch.adequate && !index.contains_key(&p.patch.patch_id) => {
                index.insert(p.patch.patch_id.clone(), views.len());
                views.push(PatchView {
                    patch: p.patch.clone(),
                    status: Verdict::Pending,
                    verdict: None,
                    build: None,
                    note: p.note.clone(),
                    committed_at: p.committed_at,
                    attempt_started_at: p.attempt_started_at,
                    proposal: None,
                    seq: r.seq,
                });
            }
            Payload::Verdict(v) => {
                verdicts.insert(&v.patch_id, v);
            }
            Payload::Proposal(p) => {
                proposals.insert(&p.patch_id, p);
            }
            _ => {}
        }
    }
    for v in &mut views {
        v.build = builds.get(v.patch.build_id.as_str()).map(|b| (*b).clone());
        if let Some(t) = verdicts.get(v.patch.patch_id.as_str()) {
            v.status = t.verdict;
            v.verdict = Some((*t).clone());
        }
        v.proposal = proposals.get(v.patch.patch_id.as_str()).map(|p| (*p).clone());
    }
    views.sort_by_key(PatchView::queue_key);
    views
}

/// Delays for one patch, in seconds: commit to attempt start, attempt start
/// to patch, patch to verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTimes {
    pub patch_id: String,
    pub build_id: String,
    pub commit_to_attempt: Option<i64>,
    pub attempt_to_patch: i64,
    pub patch_to_verdict: Option<i64>,
}

pub fn response_times(records: &[ArchiveRecord]) -> Vec<ResponseTimes> {
    patch_views(records)
        .into_iter()
        .map(|v| ResponseTimes {
            commit_to_attempt: v.committed_at.map(|c| v.attempt_started_at.seconds_since(c)),
            attempt_to_patch: v.patch.created_at.seconds_since(v.attempt_started_at),
            patch_to_verdict: v.verdict.as_ref().map(|t| t.decided_at.seconds_since(v.patch.created_at)),
            patch_id: v.patch.patch_id,
            build_id: v.patch.build_id,
        })
        .collect()
}

pub const BRANCH_PREFIX: &str = "repairbot/";

impl Bot {
    /// Adequate patches in queue order, optionally only those with `status`.
    pub fn patches(&self, status: Option<Verdict>) -> Result<Vec<PatchView>, ArchiveError> {
        let mut views = patch_views(&self.archive.records()?);
        views.retain(|v| status.is_none_or(|s| v.status == s));
        Ok(views)
    }

    pub fn patch(&self, patch_id: &str) -> Result<Option<PatchView>, ArchiveError> {
        Ok(patch_views(&self.archive.records()?).into_iter().find(|v| v.patch.patch_id == patch_id))
    }

    /// Records a verdict on a pending patch. Exactly one of several
    /// concurrent verdicts on the same patch succeeds.
    pub fn record_verdict(
        &self,
        patch_id: &str,
        verdict: Verdict,
        analyst_id: &str,
        note: &str,
    ) -> Result<TriageVerdict, TriageError> {
        let _guard = self.triage_lock.lock().unwrap();
        let view = self.patch(patch_id)?.ok_or_else(|| TriageError::NotFound(patch_id.to_string()))?;
        if !view.status.can_transition_to(verdict) {
            if verdict == Verdict::Pending {
                return Err(TriageError::Invalid("a verdict cannot be pending".into()));
            }
            return Err(TriageError::Conflict { patch_id: patch_id.to_string(), current: view.status });
        }
        let t = TriageVerdict {
            patch_id: patch_id.to_string(),
            verdict,
            analyst_id: analyst_id.to_string(),
            note: note.to_string(),
            decided_at: Timestamp::now(),
        };
        self.archive.append(None, Payload::Verdict(t.clone()))?;
        Ok(t)
    }

    /// Commits a correct patch on its own branch in a fresh clone of the
    /// project at the built revision. Proposing twice returns the first proposal.
    pub fn propose(&self, patch_id: &str) -> Result<ProposalEntry, TriageError> {
        let _guard = self.triage_lock.lock().unwrap();
        let view = self.patch(patch_id)?.ok_or_else(|| TriageError::NotFound(patch_id.to_string()))?;
        if view.status != Verdict::Correct {
            return Err(TriageError::Forbidden(patch_id.to_string()));
        }
        if let Some(p) = view.proposal {
            return Ok(p);
        }
        let build = view.build.as_ref().ok_or_else(|| TriageError::Failed("build record missing".into()))?;
        let fail = |e: &dyn std::fmt::Display| TriageError::Failed(e.to_string());

        let parent = self.config.workdir.join("proposals");
        fs::create_dir_all(&parent).map_err(|e| fail(&e))?;
        let repo = parent.join(patch_id);
        if repo.exists() {
            fs::remove_dir_all(&repo).map_err(|e| fail(&e))?;
        }
        let locator = self.backend().repo_locator(build).map_err(|e| fail(&e))?;
        let dest = repo.to_string_lossy().into_owned();
        vcs::git(&parent, &["clone", "-q", "--no-checkout", &locator, &dest]).map_err(|e| fail(&e))?;
        checkout_build(self.backend().as_ref(), build, &repo).map_err(|e| fail(&e))?;
        let branch = format!("{BRANCH_PREFIX}{patch_id}");
        vcs::git(&repo, &["checkout", "-q", "-b", &branch]).map_err(|e| fail(&e))?;
        for file in parse_patch(&view.patch.edit).map_err(|e| fail(&e))? {
            let path = repo.join(&file.path);
            let original = fs::read_to_string(&path).unwrap_or_default();
            let patched = file.apply(&original).map_err(|e| fail(&e))?;
            fs::write(&path, patched).map_err(|e| fail(&e))?;
        }

        let description = describe(&view, build);
        fs::write(parent.join(format!("{patch_id}.md")), &description).map_err(|e| fail(&e))?;
        let now = Timestamp::now();
        let commit = vcs::commit_all(&repo, &description, now.unix()).map_err(|e| fail(&e))?;
        let entry = ProposalEntry { patch_id: patch_id.to_string(), branch, repository: dest, commit, proposed_at: now };
        self.archive.append(None, Payload::Proposal(entry.clone()))?;
        Ok(entry)
    }
}

fn describe(view: &PatchView, build: &BuildRecord) -> String {
    let mut out = format!("Fix failing build {} of {}\n\n", build.build_id, build.project.slug);
    out.push_str(&format!("Patch {} was produced by {}", view.patch.patch_id, view.patch.tool_name));
    out.push_str(" and passes the project's test suite.\n");
    if let Some(v) = &view.verdict {
        out.push_str(&format!("Reviewed by {}", v.analyst_id));
        if !v.note.is_empty() {
            out.push_str(&format!(": {}", v.note));
        }
        out.push('\n');
    }
    if !view.note.is_empty() {
        out.push_str(&format!("\n{}\n", view.note));
    }
    out
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CiBackend, CommitRef, FeedError};
use crate::model::{BuildRecord, CiStatus, ProjectRef, TimeWindow, Timestamp, Trigger};
use crate::vcs;

pub const MANIFEST_NAME: &str = "feed.manifest";

/// One build as stored in the manifest; the project is referenced by slug
/// and the log and repository by paths relative to the feed root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildDescriptor {
    pub build_id: String,
    pub project: String,
    pub trigger: Trigger,
    pub commit_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_base_commit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pr_head_commit: Option<String>,
    pub ci_status: CiStatus,
    pub finished_at: Timestamp,
    pub log: String,
    pub repo: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_failing_tests: Option<u32>,
    /// Tree hash of the merge the CI built, for pull request builds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merge_tree: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedManifest {
    pub projects: Vec<ProjectRef>,
    pub builds: Vec<BuildDescriptor>,
}

impl FeedManifest {
    pub fn write(&self, root: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(root.join(MANIFEST_NAME), text + "\n")
    }
}

/// Feed backed by a directory holding `feed.manifest`, build logs and local
/// repositories. Everything is loaded and checked once at open.
#[derive(Debug)]
pub struct FixtureCi {
    root: PathBuf,
    projects: Vec<ProjectRef>,
    builds: Vec<(BuildRecord, BuildDescriptor)>,
    by_id: BTreeMap<String, usize>,
}

impl FixtureCi {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, FeedError> {
        let root = root.into();
        // Repositories are cloned from other working directories.
        let root = fs::canonicalize(&root).unwrap_or(root);
        let path = root.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path)
            .map_err(|e| FeedError::Fatal(format!("cannot read {}: {e}", path.display())))?;
        let manifest: FeedManifest = serde_json::from_str(&text)
            .map_err(|e| FeedError::Fatal(format!("malformed {}: {e}", path.display())))?;

        let mut slugs = BTreeMap::new();
        for p in &manifest.projects {
            p.validate().map_err(|e| FeedError::Fatal(e.to_string()))?;
            if slugs.insert(p.slug.clone(), p.clone()).is_some() {
                return Err(FeedError::Fatal(format!("duplicate project {}", p.slug)));
            }
        }
        let mut seen = BTreeSet::new();
        let mut builds = Vec::new();
        for d in manifest.builds {
            if !seen.insert(d.build_id.clone()) {
                return Err(FeedError::Fatal(format!("duplicate build {}", d.build_id)));
            }
            let project = slugs
                .get(&d.project)
                .ok_or_else(|| FeedError::Fatal(format!("build {} names unknown project {}", d.build_id, d.project)))?;
            if !root.join(&d.log).is_file() {
                return Err(FeedError::Fatal(format!("log {} of build {} does not exist", d.log, d.build_id)));
            }
            let record = BuildRecord {
                build_id: d.build_id.clone(),
                project: project.clone(),
                trigger: d.trigger,
                commit_id: d.commit_id.clone(),
                pr_base_commit: d.pr_base_commit.clone(),
                pr_head_commit: d.pr_head_commit.clone(),
                ci_status: d.ci_status,
                finished_at: d.finished_at,
                log_handle: d.log.clone(),
                ci_failing_tests: d.ci_failing_tests,
            };
            record.validate().map_err(|e| FeedError::Fatal(e.to_string()))?;
            builds.push((record, d));
        }
        builds.sort_by(|a, b| (a.0.finished_at, &a.0.build_id).cmp(&(b.0.finished_at, &b.0.build_id)));
        let by_id = builds.iter().enumerate().map(|(i, (b, _))| (b.build_id.clone(), i)).collect();
        Ok(FixtureCi { root, projects: manifest.projects, builds, by_id })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn descriptor(&self, build_id: &str) -> Option<&BuildDescriptor> {
        self.by_id.get(build_id).map(|&i| &self.builds[i].1)
    }

    fn entry(&self, build_id: &str) -> Result<&(BuildRecord, BuildDescriptor), FeedError> {
        self.by_id
            .get(build_id)
            .map(|&i| &self.builds[i])
            .ok_or_else(|| FeedError::UnknownBuild(build_id.to_string()))
    }

    /// Commits referenced by the manifest that are missing from their
    /// repository. Deleted commits are a legitimate field condition, so this
    /// is a report rather than an open-time failure.
    pub fn missing_commits(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (b, d) in &self.builds {
            let repo = self.root.join(&d.repo);
            let wanted = [Some(&b.commit_id), b.pr_base_commit.as_ref(), b.pr_head_commit.as_ref()];
            for c in wanted.into_iter().flatten() {
                if !vcs::commit_exists(&repo, c) {
                    out.push((b.build_id.clone(), c.clone()));
                }
            }
        }
        out
    }
}

impl CiBackend for FixtureCi {
    fn projects(&self) -> Result<Vec<ProjectRef>, FeedError> {
        Ok(self.projects.clone())
    }

    fn list_recent_builds(&self, window: TimeWindow) -> Result<Vec<BuildRecord>, FeedError> {
        if window.start > window.end {
            return Err(FeedError::Fatal(format!("window {}..{} is reversed", window.start, window.end)));
        }
        Ok(self
            .builds
            .iter()
            .filter(|(b, _)| window.contains(b.finished_at))
            .map(|(b, _)| b.clone())
            .collect())
    }

    fn get_build(&self, build_id: &str) -> Result<BuildRecord, FeedError> {
        Ok(self.entry(build_id)?.0.clone())
    }

    fn fetch_log(&self, build_id: &str) -> Result<String, FeedError> {
        let (_, d) = self.entry(build_id)?;
        let bytes = fs::read(self.root.join(&d.log)).map_err(|_| FeedError::MissingLog(build_id.to_string()))?;
        Ok(String::from_utf8_lossy(&bytes).into_owned())
    }

    fn resolve_commit(&self, build: &BuildRecord) -> Result<CommitRef, FeedError> {
        let (_, d) = self.entry(&build.build_id)?;
        let repo = self.root.join(&d.repo);
        let check = |c: &String| {
            if vcs::commit_exists(&repo, c) {
                Ok(c.clone())
            } else {
                Err(FeedError::Unresolvable { build_id: build.build_id.clone(), commit: c.clone() })
            }
        };
        match (&build.pr_base_commit, &build.pr_head_commit) {
            (Some(base), Some(head)) => Ok(CommitRef::Pr { base: check(base)?, head: check(head)? }),
            _ => Ok(CommitRef::Push { commit: check(&build.commit_id)? }),
        }
    }

    fn repo_locator(&self, build: &BuildRecord) -> Result<String, FeedError> {
        let (_, d) = self.entry(&build.build_id)?;
        Ok(self.root.join(&d.repo).to_string_lossy().into_owned())
    }
}

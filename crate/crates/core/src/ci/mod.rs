//! Access to a CI service and its code host.

mod fixture;
mod live;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BuildRecord, ProjectRef, TimeWindow};

pub use fixture::{BuildDescriptor, FeedManifest, FixtureCi, MANIFEST_NAME};
pub use live::LiveCi;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeedError {
    /// Worth retrying later: the service could not be reached.
    #[error("feed unavailable: {0}")]
    Transient(String),
    #[error("feed configuration error: {0}")]
    Fatal(String),
    #[error("unknown build {0}")]
    UnknownBuild(String),
    #[error("missing log for build {0}")]
    MissingLog(String),
    #[error("commit {commit} of build {build_id} cannot be resolved")]
    Unresolvable { build_id: String, commit: String },
}

impl FeedError {
    pub fn is_transient(&self) -> bool {
        matches!(self, FeedError::Transient(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommitRef {
    Push { commit: String },
    Pr { base: String, head: String },
}

pub trait CiBackend: Send + Sync {
    fn projects(&self) -> Result<Vec<ProjectRef>, FeedError>;

    /// Builds with `finished_at` in the half-open window, oldest first.
    fn list_recent_builds(&self, window: TimeWindow) -> Result<Vec<BuildRecord>, FeedError>;

    fn get_build(&self, build_id: &str) -> Result<BuildRecord, FeedError>;

    fn fetch_log(&self, build_id: &str) -> Result<String, FeedError>;

    fn resolve_commit(&self, build: &BuildRecord) -> Result<CommitRef, FeedError>;

    /// Something `git clone` accepts: a path or URL.
    fn repo_locator(&self, build: &BuildRecord) -> Result<String, FeedError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Fixture,
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiFeed {
    pub backend: BackendKind,
    pub root: String,
    pub auth: Option<String>,
}

impl CiFeed {
    /// URLs select the live backend, anything else is a fixture directory.
    pub fn from_locator(locator: &str, auth: Option<String>) -> Self {
        let backend = if locator.starts_with("http://") || locator.starts_with("https://") {
            BackendKind::Live
        } else {
            BackendKind::Fixture
        };
        CiFeed { backend, root: locator.to_string(), auth }
    }

    pub fn open(&self) -> Result<Arc<dyn CiBackend>, FeedError> {
        Ok(match self.backend {
            BackendKind::Fixture => Arc::new(FixtureCi::open(PathBuf::from(&self.root))?),
            BackendKind::Live => Arc::new(LiveCi::new(&self.root, self.auth.clone())?),
        })
    }
}

//! HTTP client skeleton for a hosted CI service.
//!
//! Assumed endpoints, relative to the base URL:
//! `GET projects`, `GET builds?from=&to=`, `GET builds/{id}`,
//! `GET builds/{id}/log`. Repositories are cloned from `repos/{slug}.git`.

use std::thread;
use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::de::DeserializeOwned;

use super::{CiBackend, CommitRef, FeedError};
use crate::model::{BuildRecord, ProjectRef, TimeWindow};

const ATTEMPTS: u32 = 3;

#[derive(Debug, Clone)]
pub struct LiveCi {
    base: String,
    token: Option<String>,
    client: Client,
    backoff: Duration,
}

impl LiveCi {
    pub fn new(base: &str, token: Option<String>) -> Result<Self, FeedError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| FeedError::Fatal(e.to_string()))?;
        Ok(LiveCi {
            base: base.trim_end_matches('/').to_string(),
            token,
            client,
            backoff: Duration::from_millis(500),
        })
    }

    /// Initial delay between retries; doubles after each failure.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn send(&self, path: &str, query: &[(&str, String)]) -> Result<Response, FeedError> {
        let url = format!("{}/{}", self.base, path);
        let mut delay = self.backoff;
        let mut last = FeedError::Transient(format!("{url}: no attempt made"));
        for attempt in 1..=ATTEMPTS {
            let mut req = self.client.get(&url).query(query);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => return Ok(resp),
                Ok(resp) if resp.status() == StatusCode::NOT_FOUND => {
                    return Err(FeedError::UnknownBuild(path.to_string()))
                }
                Ok(resp) if resp.status().is_server_error() => {
                    last = FeedError::Transient(format!("{url}: HTTP {}", resp.status()));
                }
                Ok(resp) => return Err(FeedError::Fatal(format!("{url}: HTTP {}", resp.status()))),
                Err(e) => last = FeedError::Transient(format!("{url}: {e}")),
            }
            log::warn!("attempt {attempt}/{ATTEMPTS} failed: {last}");
            if attempt < ATTEMPTS {
                thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(last)
    }

    fn get_json<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<T, FeedError> {
        self.send(path, query)?
            .json()
            .map_err(|e| FeedError::Fatal(format!("unexpected response for {path}: {e}")))
    }
}

impl CiBackend for LiveCi {
    fn projects(&self) -> Result<Vec<ProjectRef>, FeedError> {
        self.get_json("projects", &[])
    }

    fn list_recent_builds(&self, window: TimeWindow) -> Result<Vec<BuildRecord>, FeedError> {
        let query = [("from", window.start.to_string()), ("to", window.end.to_string())];
        let mut builds: Vec<BuildRecord> = self.get_json("builds", &query)?;
        // Do not trust the service on boundaries or ordering.
        builds.retain(|b| window.contains(b.finished_at));
        builds.sort_by(|a, b| (a.finished_at, &a.build_id).cmp(&(b.finished_at, &b.build_id)));
        Ok(builds)
    }

    fn get_build(&self, build_id: &str) -> Result<BuildRecord, FeedError> {
        self.get_json(&format!("builds/{build_id}"), &[])
            .map_err(|e| match e {
                FeedError::UnknownBuild(_) => FeedError::UnknownBuild(build_id.to_string()),
                other => other,
            })
    }

    fn fetch_log(&self, build_id: &str) -> Result<String, FeedError> {
        match self.send(&format!("builds/{build_id}/log"), &[]) {
            Ok(resp) => resp.text().map_err(|e| FeedError::Transient(e.to_string())),
            Err(FeedError::UnknownBuild(_)) => Err(FeedError::MissingLog(build_id.to_string())),
            Err(e) => Err(e),
        }
    }

    fn resolve_commit(&self, build: &BuildRecord) -> Result<CommitRef, FeedError> {
        Ok(match (&build.pr_base_commit, &build.pr_head_commit) {
            (Some(base), Some(head)) => CommitRef::Pr { base: base.clone(), head: head.clone() },
            _ => CommitRef::Push { commit: build.commit_id.clone() },
        })
    }

    fn repo_locator(&self, build: &BuildRecord) -> Result<String, FeedError> {
        Ok(format!("{}/repos/{}.git", self.base, build.project.slug))
    }
}

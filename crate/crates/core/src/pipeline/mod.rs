//! The bot: scan a window of CI builds, reproduce the interesting ones,
//! repair the reproduced ones, archive everything and notify the analyst.

mod clock;
mod triage;

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{
    compute_statistics, Archive, ArchiveError, ArchiveRecord, BuildEntry, Payload, PatchEntry, ReproductionEntry,
    RunEntry, RunStatus,
};
use crate::ci::{CiBackend, CiFeed, FeedError};
use crate::model::{BuildRecord, BuildTool, CiStatus, Outcome, RunStatistics, TimeWindow, Timestamp};
use crate::repair::{Limits, RepairEngine, ToolRegistry};
use crate::reproducer::{Adapters, MinibuildAdapter, Reproducer, ReproducerConfig, Retention, Timeouts};
use crate::scanner::{load_catalog, screen, select_projects, CatalogError, Screening, SelectionCriteria, DEFAULT_WINDOW};

pub use clock::{Clock, LogicalClock, SystemClock};
pub use triage::{patch_views, response_times, PatchView, QueueItem, ResponseTimes, TriageError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("feed: {0}")]
    Feed(#[from] FeedError),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid hook event: {0}")]
    BadEvent(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Periodic,
    Hook,
    Oneshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Fixture directory or base URL of a live CI service.
    pub feed: String,
    #[serde(default)]
    pub auth_token: Option<String>,
    /// Project catalog; without one, the feed's own project list is used.
    #[serde(default)]
    pub catalog: Option<PathBuf>,
    #[serde(default)]
    pub criteria: SelectionCriteria,
    pub interval_secs: u64,
    pub mode: Mode,
    pub workers: usize,
    pub tools: ToolRegistry,
    pub limits: Limits,
    pub archive: PathBuf,
    pub notify_dir: PathBuf,
    pub workdir: PathBuf,
    pub timeouts: Timeouts,
    /// Environment variables visible to builds run locally.
    #[serde(default)]
    pub local_env: BTreeMap<String, i64>,
}

impl RunConfig {
    /// Defaults with all state (archive, notifications, workspaces) under `state_dir`.
    pub fn new(feed: impl Into<String>, state_dir: &Path) -> Self {
        RunConfig {
            feed: feed.into(),
            auth_token: None,
            catalog: None,
            criteria: SelectionCriteria::default(),
            interval_secs: DEFAULT_WINDOW.as_secs(),
            mode: Mode::Oneshot,
            workers: 4,
            tools: ToolRegistry::default(),
            limits: Limits::default(),
            archive: state_dir.join("archive.jsonl"),
            notify_dir: state_dir.join("notifications"),
            workdir: state_dir.join("work"),
            timeouts: Timeouts::default(),
            local_env: BTreeMap::new(),
        }
    }

    pub fn interval(&self) -> Duration {
        Duration::from_secs(self.interval_secs)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.mode == Mode::Periodic && self.interval_secs == 0 {
            return Err(PipelineError::Config("interval must be positive in periodic mode".into()));
        }
        if self.workers == 0 {
            return Err(PipelineError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// What happened to one build during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub build_id: String,
    pub interesting: bool,
    /// Absent when the build was not reproduced in this run (not
    /// interesting, or already processed by an earlier run).
    pub outcome: Option<Outcome>,
    pub adequate_patches: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub stats: RunStatistics,
    pub builds: Vec<BuildReport>,
}

/// A build-finished notification from the CI service.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookEvent {
    pub build_id: String,
    pub status: CiStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "reason")]
pub enum HookDecision {
    Accepted,
    Ignored(String),
}

pub struct Bot {
    config: RunConfig,
    reproducer: Reproducer,
    engine: RepairEngine,
    archive: Archive,
    triage_lock: Mutex<()>,
    hooks: Mutex<HookQueue>,
}

#[derive(Default)]
struct HookQueue {
    pending: VecDeque<String>,
    seen: HashSet<String>,
}

/// First retry delay after a feed failure; doubles per failure up to the interval.
const BASE_BACKOFF: Duration = Duration::from_secs(30);

pub fn backoff(failures: u32, cap: Duration) -> Duration {
    let factor = 1u32.checked_shl(failures.saturating_sub(1).min(20)).unwrap_or(u32::MAX);
    BASE_BACKOFF.saturating_mul(factor).min(cap.max(BASE_BACKOFF))
}

impl Bot {
    pub fn new(config: RunConfig) -> Result<Bot, PipelineError> {
        let backend = CiFeed::from_locator(&config.feed, config.auth_token.clone()).open()?;
        Bot::with_backend(config, backend)
    }

    pub fn with_backend(config: RunConfig, backend: Arc<dyn CiBackend>) -> Result<Bot, PipelineError> {
        config.validate()?;
        fs::create_dir_all(&config.workdir)?;
        fs::create_dir_all(&config.notify_dir)?;
        let mut adapters = Adapters::standard();
        let minibuild = MinibuildAdapter { env: config.local_env.clone(), ..MinibuildAdapter::default() };
        adapters.register(BuildTool::FixtureMinibuild, Arc::new(minibuild));
        let rconfig = ReproducerConfig {
            workdir: config.workdir.clone(),
            timeouts: config.timeouts,
            retention: Retention::Reproduced,
            workers: config.workers,
        };
        let engine = RepairEngine { registry: config.tools.clone(), limits: config.limits, local_env: config.local_env.clone() };
        Ok(Bot {
            reproducer: Reproducer::new(backend, adapters, rconfig),
            engine,
            archive: Archive::open(&config.archive)?,
            config,
            triage_lock: Mutex::new(()),
            hooks: Mutex::new(HookQueue::default()),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn backend(&self) -> &Arc<dyn CiBackend> {
        self.reproducer.backend()
    }

    fn selected_projects(&self) -> Result<HashSet<String>, PipelineError> {
        let catalog = match &self.config.catalog {
            Some(path) => load_catalog(path)?,
            None => self.backend().projects()?,
        };
        Ok(select_projects(&catalog, &self.config.criteria).into_iter().map(|p| p.slug).collect())
    }

    fn next_run_id(&self, records: &[ArchiveRecord], window: TimeWindow) -> String {
        let n = records.iter().filter(|r| matches!(r.payload, Payload::Run(_))).count();
        format!("run-{}-{}-{n}", window.start.unix(), window.end.unix())
    }

    fn finish_run(&self, run_id: &str, window: TimeWindow, status: RunStatus, detail: String) -> Result<RunStatistics, PipelineError> {
        let stats = compute_statistics(&self.archive.records()?, window, run_id);
        let entry = RunEntry { status, stats: stats.clone(), detail };
        self.archive.append(Some(run_id), Payload::Run(Box::new(entry)))?;
        Ok(stats)
    }

    /// Scans `window`, processes every interesting build in it and appends a
    /// run record. A feed failure still appends a run record, marked as such.
    pub fn run_once(&self, window: TimeWindow) -> Result<RunReport, PipelineError> {
        let records = self.archive.records()?;
        let run_id = self.next_run_id(&records, window);
        let listed = self.selected_projects().and_then(|p| Ok((p, self.backend().list_recent_builds(window)?)));
        let (projects, builds) = match listed {
            Ok(x) => x,
            Err(e) => {
                self.finish_run(&run_id, window, RunStatus::FeedError, e.to_string())?;
                return Err(e);
            }
        };
        let builds: Vec<BuildRecord> = builds.into_iter().filter(|b| projects.contains(&b.project.slug)).collect();
        log::info!("{run_id}: {} builds in window", builds.len());
        let done = completed_builds(&records);
        let reports = self.process_builds(&run_id, window, &builds, &done);
        let reports = match reports {
            Ok(r) => r,
            Err(e) => {
                self.finish_run(&run_id, window, RunStatus::Aborted, e.to_string())?;
                return Err(e);
            }
        };
        let stats = self.finish_run(&run_id, window, RunStatus::Ok, String::new())?;
        Ok(RunReport { stats, builds: reports })
    }

    fn process_builds(
        &self,
        run_id: &str,
        window: TimeWindow,
        builds: &[BuildRecord],
        done: &HashSet<String>,
    ) -> Result<Vec<BuildReport>, PipelineError> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut seen = HashSet::new();
        let unique: Vec<&BuildRecord> = builds.iter().filter(|b| seen.insert(b.build_id.clone())).collect();
        pool.install(|| unique.par_iter().map(|b| self.process_build(run_id, window, b, done)).collect())
    }

    /// Screen, reproduce, repair and archive one build. The reproduction
    /// record is written last and marks the build as done.
    pub fn process_build(
        &self,
        run_id: &str,
        window: TimeWindow,
        build: &BuildRecord,
        done: &HashSet<String>,
    ) -> Result<BuildReport, PipelineError> {
        let mut report = BuildReport {
            build_id: build.build_id.clone(),
            interesting: false,
            outcome: None,
            adequate_patches: Vec::new(),
            diagnostics: Vec::new(),
        };
        let now = window.end - Duration::from_secs(1);
        let log = self.backend().fetch_log(&build.build_id).unwrap_or_else(|e| {
            report.diagnostics.push(e.to_string());
            String::new()
        });
        let screening = screen(build, &log, now, window.duration());
        let label = screening_label(&screening).to_string();
        report.interesting = screening.interesting().is_some();
        let entry = BuildEntry { build: build.clone(), interesting: report.interesting, screening: label };
        self.archive.append(Some(run_id), Payload::Build(entry))?;
        if !report.interesting {
            return Ok(report);
        }
        if done.contains(&build.build_id) {
            report.diagnostics.push("already processed".into());
            return Ok(report);
        }

        let attempt = self.reproducer.reproduce(build);
        report.outcome = Some(attempt.result.outcome);
        let mut manifest = Vec::new();
        if let Some(ws) = &attempt.workspace {
            match self.engine.repair(&attempt.result, ws, Timestamp::now()) {
                Ok(repair) => {
                    for p in &repair.patches {
                        let note = repair.notes.get(&p.patch_id).cloned().unwrap_or_default();
                        let entry = PatchEntry {
                            patch: p.clone(),
                            committed_at: attempt.commit_time,
                            attempt_started_at: attempt.started_at,
                            note,
                        };
                        self.archive.append(Some(run_id), Payload::Patch(entry.clone()))?;
                        if p.adequate {
                            report.adequate_patches.push(p.patch_id.clone());
                            self.notify(&entry)?;
                        }
                    }
                    for r in &repair.runs {
                        report.diagnostics.extend(r.diagnostics.iter().map(|d| format!("{}: {d}", r.tool)));
                    }
                }
                Err(e) => report.diagnostics.push(e.to_string()),
            }
            manifest = ws.source_manifest().unwrap_or_default().into_iter().collect();
            if let Err(e) = ws.remove() {
                log::warn!("cannot remove workspace {}: {e}", ws.workspace_id);
            }
        }
        let steps = attempt.trace.iter().map(|s| serde_json::to_string(s).expect("step serializes")).collect();
        let entry = ReproductionEntry { result: attempt.result, steps, manifest };
        self.archive.append(Some(run_id), Payload::Reproduction(Box::new(entry)))?;
        Ok(report)
    }

    /// One message file per adequate patch; an existing file is kept.
    fn notify(&self, entry: &PatchEntry) -> Result<(), PipelineError> {
        let path = self.config.notify_dir.join(format!("{}.json", entry.patch.patch_id));
        if path.exists() {
            return Ok(());
        }
        let message = serde_json::json!({
            "subject": format!("New patch for build {}", entry.patch.build_id),
            "patch_id": entry.patch.patch_id,
            "build_id": entry.patch.build_id,
            "tool": entry.patch.tool_name,
            "flags": entry.patch.overfitting_flags,
            "diff": entry.patch.edit,
        });
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&message).expect("message serializes"))?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    /// Runs back-to-back windows of `interval` starting at `start` until
    /// `stop` is set; the window in progress when it is set completes. Feed
    /// failures extend the pending window after an exponential backoff.
    pub fn run_periodic(&self, clock: &dyn Clock, start: Timestamp, stop: &AtomicBool) -> Vec<Result<RunReport, String>> {
        let interval = self.config.interval();
        let mut out = Vec::new();
        let mut window_start = start;
        let mut end = start + interval;
        let mut failures = 0;
        loop {
            clock.sleep_until(end, stop);
            match self.run_once(TimeWindow::new(window_start, end)) {
                Ok(r) => {
                    failures = 0;
                    window_start = end;
                    end = end + interval;
                    out.push(Ok(r));
                }
                Err(e) => {
                    failures += 1;
                    log::warn!("run failed ({failures} in a row): {e}");
                    end = end + backoff(failures, interval);
                    out.push(Err(e.to_string()));
                }
            }
            if stop.load(Ordering::SeqCst) {
                return out;
            }
        }
    }

    /// Queues a failed build for immediate processing. Events for other
    /// statuses, and repeats of a queued or processed build, are ignored.
    pub fn handle_hook(&self, event: &HookEvent) -> Result<HookDecision, PipelineError> {
        if event.build_id.trim().is_empty() {
            return Err(PipelineError::BadEvent("missing build_id".into()));
        }
        if event.status != CiStatus::Failed {
            return Ok(HookDecision::Ignored(format!("status {}", serde_json::to_string(&event.status).unwrap_or_default())));
        }
        let mut q = self.hooks.lock().unwrap();
        if q.seen.contains(&event.build_id) || completed_builds(&self.archive.records()?).contains(&event.build_id) {
            return Ok(HookDecision::Ignored("duplicate".into()));
        }
        q.seen.insert(event.build_id.clone());
        q.pending.push_back(event.build_id.clone());
        Ok(HookDecision::Accepted)
    }

    pub fn handle_hook_json(&self, body: &str) -> Result<HookDecision, PipelineError> {
        let event: HookEvent = serde_json::from_str(body).map_err(|e| PipelineError::BadEvent(e.to_string()))?;
        self.handle_hook(&event)
    }

    /// Processes queued hook builds, each as its own run over a one-second
    /// window ending at the build's finish time.
    pub fn drain_hooks(&self) -> Vec<Result<RunReport, PipelineError>> {
        let mut out = Vec::new();
        loop {
            let Some(id) = self.hooks.lock().unwrap().pending.pop_front() else { return out };
            out.push(self.run_hook(&id));
        }
    }

    fn run_hook(&self, build_id: &str) -> Result<RunReport, PipelineError> {
        let build = self.backend().get_build(build_id)?;
        let window = TimeWindow::new(build.finished_at, build.finished_at + Duration::from_secs(1));
        let records = self.archive.records()?;
        let run_id = format!("hook-{build_id}-{}", self.next_run_id(&records, window));
        let report = self.process_build(&run_id, window, &build, &completed_builds(&records))?;
        let stats = self.finish_run(&run_id, window, RunStatus::Ok, String::new())?;
        Ok(RunReport { stats, builds: vec![report] })
    }
}

fn screening_label(s: &Screening) -> &'static str {
    match s {
        Screening::Interesting(_) => "interesting",
        Screening::NotFailed => "not_failed",
        Screening::OutsideWindow => "outside_window",
        Screening::NoFailingTests => "no_failing_tests",
        Screening::LogOpaque => "log_opaque",
    }
}

/// Builds with a reproduction record, i.e. fully processed.
pub fn completed_builds(records: &[ArchiveRecord]) -> HashSet<String> {
    records
        .iter()
        .filter_map(|r| match &r.payload {
            Payload::Reproduction(e) => Some(e.result.build.build_id.clone()),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_and_caps() {
        let cap = Duration::from_secs(4 * 3600);
        assert_eq!(backoff(1, cap), Duration::from_secs(30));
        assert_eq!(backoff(2, cap), Duration::from_secs(60));
        assert_eq!(backoff(5, cap), Duration::from_secs(480));
        assert_eq!(backoff(40, cap), cap);
        assert_eq!(backoff(3, Duration::from_secs(1)), Duration::from_secs(30));
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new("feed", Path::new("/tmp/x"));
        c.validate().unwrap();
        c.mode = Mode::Periodic;
        c.interval_secs = 0;
        assert!(c.validate().is_err());
        c.interval_secs = 10;
        c.workers = 0;
        assert!(c.validate().is_err());
    }
}

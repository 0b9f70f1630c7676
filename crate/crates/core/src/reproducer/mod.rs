//! Local reproduction of a failing build: clone, checkout (recreating the
//! merge for pull requests), compile, test, observe.

mod command;
mod minibuild;
mod workspace;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::ci::{CiBackend, CommitRef};
use crate::model::{
    classify_outcome, BuildRecord, BuildTool, Outcome, ReproductionResult, Step, StepResult, Timestamp,
};
use crate::report::{parse_report_dir, TestReport};
use crate::vcs;

pub use command::CommandAdapter;
pub use minibuild::{MinibuildAdapter, ProjectManifest, DEFAULT_SKIPS, DEFAULT_TOOLCHAIN, PROJECT_MANIFEST};
pub use workspace::Workspace;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure {
    pub detail: String,
    pub timed_out: bool,
}

/// How a project is built and tested inside a workspace. Implementations
/// must confine reads and writes to the workspace.
pub trait BuildToolAdapter: Send + Sync {
    fn name(&self) -> &str;

    fn compile(&self, ws: &mut Workspace, timeout: Duration) -> Result<(), StepFailure>;

    /// Runs the tests and returns the directory holding the XML reports.
    fn run_tests(&self, ws: &Workspace, timeout: Duration) -> Result<PathBuf, StepFailure>;
}

/// Runs `f` on a helper thread, giving up after `timeout`. A late result is
/// dropped; callers must ensure `f` terminates on its own.
pub fn run_with_timeout<T: Send + 'static>(timeout: Duration, f: impl FnOnce() -> T + Send + 'static) -> Option<T> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let _ = tx.send(f());
    });
    rx.recv_timeout(timeout).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeouts {
    #[serde(with = "crate::model::duration_ms")]
    pub clone: Duration,
    #[serde(with = "crate::model::duration_ms")]
    pub compile: Duration,
    #[serde(with = "crate::model::duration_ms")]
    pub tests: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            clone: Duration::from_secs(120),
            compile: Duration::from_secs(1800),
            tests: Duration::from_secs(3600),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    Always,
    /// Keep only reproduced workspaces, which the repair stage needs.
    Reproduced,
    Never,
}

#[derive(Debug, Clone)]
pub struct ReproducerConfig {
    pub workdir: PathBuf,
    pub timeouts: Timeouts,
    pub retention: Retention,
    pub workers: usize,
}

impl ReproducerConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        ReproducerConfig {
            workdir: workdir.into(),
            timeouts: Timeouts::default(),
            retention: Retention::Reproduced,
            workers: 4,
        }
    }
}

#[derive(Clone, Default)]
pub struct Adapters(HashMap<BuildTool, Arc<dyn BuildToolAdapter>>);

impl Adapters {
    /// Minibuild for fixture projects, nothing else.
    pub fn standard() -> Self {
        let mut a = Adapters::default();
        a.register(BuildTool::FixtureMinibuild, Arc::new(MinibuildAdapter::default()));
        a
    }

    pub fn register(&mut self, tool: BuildTool, adapter: Arc<dyn BuildToolAdapter>) {
        self.0.insert(tool, adapter);
    }

    pub fn get(&self, tool: BuildTool) -> Option<&Arc<dyn BuildToolAdapter>> {
        self.0.get(&tool)
    }
}

/// Everything one attempt produced. The workspace is present only when retained.
#[derive(Debug, Clone)]
pub struct Attempt {
    pub result: ReproductionResult,
    pub trace: Vec<StepResult>,
    pub report: Option<TestReport>,
    pub workspace: Option<Workspace>,
    pub started_at: Timestamp,
    /// Commit time of the built revision (the pull request head for PRs).
    pub commit_time: Option<Timestamp>,
}

impl Attempt {
    pub fn failed_step(&self) -> Option<&StepResult> {
        self.trace.iter().find(|s| s.status == crate::model::StepStatus::Failed)
    }
}

pub struct Reproducer {
    backend: Arc<dyn CiBackend>,
    adapters: Adapters,
    config: ReproducerConfig,
}

struct Progress {
    trace: Vec<StepResult>,
}

impl Progress {
    fn ok(&mut self, step: Step) {
        self.trace.push(StepResult::ok(step));
    }

    /// Records the failure and marks every later step skipped.
    fn fail(&mut self, step: Step, detail: impl Into<String>) {
        self.trace.push(StepResult::failed(step, detail));
        let rest = Step::ORDER.iter().skip_while(|s| **s != step).skip(1);
        self.trace.extend(rest.map(|s| StepResult::skipped(*s)));
    }
}

impl Reproducer {
    pub fn new(backend: Arc<dyn CiBackend>, adapters: Adapters, config: ReproducerConfig) -> Self {
        Reproducer { backend, adapters, config }
    }

    pub fn config(&self) -> &ReproducerConfig {
        &self.config
    }

    pub fn backend(&self) -> &Arc<dyn CiBackend> {
        &self.backend
    }

    /// Never fails: every problem ends up in one of the six outcomes.
    pub fn reproduce(&self, build: &BuildRecord) -> Attempt {
        let started_at = Timestamp::now();
        let clock = Instant::now();
        let mut p = Progress { trace: Vec::new() };
        let mut report = None;
        let mut commit_time = None;
        let ws = match Workspace::create(&self.config.workdir, &build.build_id) {
            Ok(ws) => Some(ws),
            Err(e) => {
                p.fail(Step::Clone, format!("cannot create workspace: {e}"));
                None
            }
        };
        let mut ws = ws;
        if let Some(ws) = ws.as_mut() {
            self.steps(build, ws, &mut p, &mut report, &mut commit_time);
        }

        let failing = report.as_ref().map_or(0, TestReport::failing);
        let outcome = classify_outcome(&p.trace, failing).expect("reproducer always records a complete trace");
        let (tests_run, signatures) = match &report {
            Some(r) => (r.tests(), r.signatures()),
            None => (0, Vec::new()),
        };
        let keep = match self.config.retention {
            Retention::Always => true,
            Retention::Reproduced => outcome == Outcome::Reproduced,
            Retention::Never => false,
        };
        let workspace_id = ws.as_ref().map(|w| w.workspace_id.clone()).unwrap_or_default();
        if !keep {
            if let Some(w) = ws.take() {
                if let Err(e) = w.remove() {
                    log::warn!("cannot remove workspace {}: {e}", w.workspace_id);
                }
            }
        }
        let result = ReproductionResult {
            build: build.clone(),
            outcome,
            tests_run,
            tests_failed: failing,
            signatures,
            wall_time: clock.elapsed(),
            workspace_id,
        };
        Attempt { result, trace: p.trace, report, workspace: ws, started_at, commit_time }
    }

    fn steps(
        &self,
        build: &BuildRecord,
        ws: &mut Workspace,
        p: &mut Progress,
        report: &mut Option<TestReport>,
        commit_time: &mut Option<Timestamp>,
    ) {
        let t = self.config.timeouts;
        let locator = match self.backend.repo_locator(build) {
            Ok(l) => l,
            Err(e) => return p.fail(Step::Clone, e.to_string()),
        };
        let dest = ws.source_dir.to_string_lossy().into_owned();
        let cloned = vcs::git_timeout(&ws.root, &["clone", "-q", "--no-checkout", "--no-hardlinks", &locator, &dest], t.clone);
        if let Err(e) = cloned {
            return p.fail(Step::Clone, e.to_string());
        }
        p.ok(Step::Clone);

        match checkout_build(self.backend.as_ref(), build, &ws.source_dir) {
            Ok(time) => *commit_time = time,
            Err(detail) => return p.fail(Step::Checkout, detail),
        }
        p.ok(Step::Checkout);

        let Some(adapter) = self.adapters.get(build.project.build_tool_tag) else {
            return p.fail(Step::Compile, format!("no adapter for build tool {}", build.project.build_tool_tag));
        };
        ws.env_pins.insert("adapter".into(), adapter.name().to_string());
        if let Err(f) = adapter.compile(ws, t.compile) {
            return p.fail(Step::Compile, f.detail);
        }
        p.ok(Step::Compile);

        let reports = match adapter.run_tests(ws, t.tests) {
            Ok(dir) => dir,
            Err(f) => return p.fail(Step::Test, f.detail),
        };
        p.ok(Step::Test);

        match parse_report_dir(&reports) {
            Ok(r) => {
                *report = Some(r);
                p.ok(Step::Observe);
            }
            Err(e) => p.fail(Step::Observe, e.to_string()),
        }
    }

    /// Reproduces builds concurrently on `workers` threads, preserving order.
    pub fn reproduce_all(&self, builds: &[BuildRecord]) -> Vec<Attempt> {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| builds.par_iter().map(|b| self.reproduce(b)).collect())
    }
}

/// Puts a clone at the revision CI built: the pushed commit, or for a pull
/// request the base with the head merged in. Returns the commit time of the
/// pushed commit or pull request head.
pub fn checkout_build(backend: &dyn CiBackend, build: &BuildRecord, repo: &Path) -> Result<Option<Timestamp>, String> {
    let commit = backend.resolve_commit(build).map_err(|e| e.to_string())?;
    let (first, merge) = match &commit {
        CommitRef::Push { commit } => (commit, None),
        CommitRef::Pr { base, head } => (base, Some(head)),
    };
    vcs::git(repo, &["checkout", "-q", "--detach", first]).map_err(|e| e.to_string())?;
    let shown = merge.unwrap_or(first);
    let time = vcs::commit_time(repo, shown).ok().map(Timestamp::from_unix);
    if let Some(head) = merge {
        let date = format!("@{} +0000", build.finished_at.unix());
        vcs::merge_no_ff(repo, head, &date).map_err(|e| format!("merge of {head} failed: {e}"))?;
    }
    Ok(time)
}

//! Build tool driven by shell commands, for ecosystems without a native
//! adapter. Commands run in the source directory with `REPAIRBOT_CACHE`
//! and `REPAIRBOT_REPORTS` pointing into the workspace; `HOME` is redirected
//! to the cache so tools cannot fall back to a shared user-level cache.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

use super::{BuildToolAdapter, StepFailure, Workspace};

#[derive(Debug, Clone)]
pub struct CommandAdapter {
    pub name: String,
    pub compile: String,
    pub test: String,
}

impl CommandAdapter {
    fn run(&self, ws: &Workspace, script: &str, timeout: Duration) -> Result<(), StepFailure> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(script)
            .current_dir(&ws.source_dir)
            .env("REPAIRBOT_CACHE", &ws.dependency_cache_dir)
            .env("REPAIRBOT_REPORTS", &ws.reports_dir)
            .env("HOME", &ws.dependency_cache_dir)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| StepFailure { detail: format!("cannot start `{script}`: {e}"), timed_out: false })?;
        let status = match child.wait_timeout(timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(StepFailure {
                    detail: format!("`{script}` timed out after {}s", timeout.as_secs()),
                    timed_out: true,
                });
            }
            Err(e) => return Err(StepFailure { detail: e.to_string(), timed_out: false }),
        };
        if status.success() {
            Ok(())
        } else {
            Err(StepFailure { detail: format!("`{script}` exited with {status}"), timed_out: false })
        }
    }
}

impl BuildToolAdapter for CommandAdapter {
    fn name(&self) -> &str {
        &self.name
    }

    fn compile(&self, ws: &mut Workspace, timeout: Duration) -> Result<(), StepFailure> {
        self.run(ws, &self.compile, timeout)
    }

    fn run_tests(&self, ws: &Workspace, timeout: Duration) -> Result<PathBuf, StepFailure> {
        // Test runners usually exit non-zero when a test fails; that only
        // counts as a harness failure if no report was written.
        match self.run(ws, &self.test, timeout) {
            Err(f) if f.timed_out || !has_reports(&ws.reports_dir) => Err(f),
            _ => Ok(ws.reports_dir.clone()),
        }
    }
}

fn has_reports(dir: &Path) -> bool {
    std::fs::read_dir(dir)
        .map(|entries| entries.flatten().any(|e| e.path().extension().is_some_and(|x| x == "xml")))
        .unwrap_or(false)
}

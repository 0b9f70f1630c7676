//! Out-of-process repair tools. The tool gets a JSON request on stdin and
//! answers with candidate diffs on stdout; the engine validates each one.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::subject::Subject;
use super::{Candidate, Limits};
use crate::model::OverfittingFlag;
use crate::reproducer::Workspace;

pub const DEFAULT_TOOL_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub workspace: String,
    pub failing_tests: Vec<String>,
    pub failure_type: String,
    /// Source files relative to `workspace`.
    pub sources: Vec<String>,
    pub report_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolPatch {
    pub diff: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResponse {
    pub patches: Vec<ToolPatch>,
}

/// Runs `command` through `sh -c` and parses its response.
pub fn invoke(command: &str, cwd: &Path, home: &Path, request: &ToolRequest, timeout: Duration) -> Result<ToolResponse, String> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .current_dir(cwd)
        .env("HOME", home)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| format!("cannot start tool: {e}"))?;
    let body = serde_json::to_vec(request).expect("request serializes");
    let mut stdin = child.stdin.take().expect("piped stdin");
    // A tool that never reads stdin must not block us.
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(&body);
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let mut stderr = child.stderr.take().expect("piped stderr");
    let err_reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });
    let status = match child.wait_timeout(timeout).map_err(|e| e.to_string())? {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(format!("tool timed out after {}s", timeout.as_secs_f64()));
        }
    };
    let _ = writer.join();
    let out = reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(format!("tool exited with {status}: {}", err.trim()));
    }
    serde_json::from_slice(&out).map_err(|e| format!("malformed tool response: {e}"))
}

pub struct ExternalOutput {
    pub candidates: Vec<Candidate>,
    pub diagnostics: Vec<String>,
}

pub fn external_repair(
    name: &str,
    command: &str,
    timeout: Duration,
    subject: &Subject,
    workspace: &Workspace,
    failure_type: &str,
    limits: &Limits,
) -> ExternalOutput {
    let mut out = ExternalOutput { candidates: Vec::new(), diagnostics: Vec::new() };
    let request = ToolRequest {
        workspace: workspace.source_dir.display().to_string(),
        failing_tests: subject.failing().map(|t| t.test.clone()).collect(),
        failure_type: failure_type.to_string(),
        sources: subject.files.iter().map(|(n, _)| n.clone()).collect(),
        report_path: workspace.reports_dir.display().to_string(),
    };
    let response = match invoke(command, &workspace.source_dir, &workspace.dependency_cache_dir, &request, timeout) {
        Ok(r) => r,
        Err(d) => {
            out.diagnostics.push(format!("{name}: {d}"));
            return out;
        }
    };
    for (i, p) in response.patches.into_iter().take(limits.max_patches).enumerate() {
        match subject.validate_diff(&p.diff) {
            Ok(v) => out.candidates.push(Candidate {
                tool: name.to_string(),
                diff: p.diff,
                adequate: v.adequate,
                flags: [OverfittingFlag::None].into(),
                stmt: None,
                predicate: None,
                note: match v.diagnostic {
                    Some(d) => format!("{}; {d}", p.note),
                    None => p.note,
                },
            }),
            Err(e) => out.diagnostics.push(format!("{name}: patch {i} discarded: {e}")),
        }
    }
    out
}

//! Build tool for minilang projects.
//!
//! A project is a directory with a `project.manifest` (TOML) listing its
//! sources. Compiling parses them and stores the program in the workspace
//! cache; testing runs it and writes `reports/suite.xml`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{run_with_timeout, BuildToolAdapter, StepFailure, Workspace};
use crate::minilang::{self, Hooks, Program, Value};
use crate::model::BuildTool;
use crate::report::write_suite_xml;

pub const PROJECT_MANIFEST: &str = "project.manifest";
pub const DEFAULT_TOOLCHAIN: &str = "minilang-1";
pub const DEFAULT_SKIPS: [&str; 3] = ["style-check", "coverage-gate", "integration-tests"];
const COVERAGE_GATE_PERCENT: usize = 80;
const PROGRAM_ARTIFACT: &str = "minibuild/program.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectManifest {
    pub build_tool: BuildTool,
    #[serde(default = "default_toolchain")]
    pub toolchain: String,
    pub sources: Vec<String>,
    /// Non-empty for multi-module projects.
    #[serde(default)]
    pub modules: Vec<String>,
    #[serde(default)]
    pub plugins: Vec<String>,
    /// Environment variables the program reads, exposed as globals.
    #[serde(default)]
    pub env: Vec<String>,
}

fn default_toolchain() -> String {
    DEFAULT_TOOLCHAIN.to_string()
}

impl ProjectManifest {
    pub fn load(source_dir: &Path) -> Result<ProjectManifest, String> {
        let path = source_dir.join(PROJECT_MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {PROJECT_MANIFEST}: {e}"))?;
        toml::from_str(&text).map_err(|e| format!("malformed {PROJECT_MANIFEST}: {e}"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn is_multi_module(&self) -> bool {
        !self.modules.is_empty()
    }

    pub fn read_sources(&self, source_dir: &Path) -> Result<Vec<(String, String)>, String> {
        self.sources
            .iter()
            .map(|s| {
                fs::read_to_string(source_dir.join(s))
                    .map(|text| (s.clone(), text))
                    .map_err(|e| format!("cannot read source {s}: {e}"))
            })
            .collect()
    }

    /// Globals for declared environment variables: the local integer value,
    /// or null when the variable is not set locally.
    pub fn globals(&self, local_env: &BTreeMap<String, i64>) -> BTreeMap<String, Value> {
        self.env
            .iter()
            .map(|name| (name.clone(), local_env.get(name).map_or(Value::Null, |v| Value::Int(*v))))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MinibuildAdapter {
    /// Plugins that never run, by name.
    pub skip: BTreeSet<String>,
    pub toolchains: BTreeSet<String>,
    /// Local values of environment variables programs may read.
    pub env: BTreeMap<String, i64>,
}

impl Default for MinibuildAdapter {
    fn default() -> Self {
        MinibuildAdapter {
            skip: DEFAULT_SKIPS.iter().map(|s| s.to_string()).collect(),
            toolchains: [DEFAULT_TOOLCHAIN.to_string()].into(),
            env: BTreeMap::new(),
        }
    }
}

impl MinibuildAdapter {
    fn active_plugins<'m>(&self, manifest: &'m ProjectManifest) -> Vec<&'m str> {
        manifest.plugins.iter().map(String::as_str).filter(|p| !self.skip.contains(*p)).collect()
    }
}

fn fail(detail: impl Into<String>) -> StepFailure {
    StepFailure { detail: detail.into(), timed_out: false }
}

fn style_violations(sources: &[(String, String)]) -> Vec<String> {
    let mut out = Vec::new();
    for (name, text) in sources {
        for (i, line) in text.lines().enumerate() {
            if line.ends_with(' ') || line.contains('\t') {
                out.push(format!("{name}:{}", i + 1));
            }
        }
    }
    out
}

impl BuildToolAdapter for MinibuildAdapter {
    fn name(&self) -> &str {
        "minibuild"
    }

    fn compile(&self, ws: &mut Workspace, timeout: Duration) -> Result<(), StepFailure> {
        let manifest = ProjectManifest::load(&ws.source_dir).map_err(fail)?;
        ws.env_pins.insert("toolchain".into(), manifest.toolchain.clone());
        if manifest.build_tool != BuildTool::FixtureMinibuild {
            return Err(fail(format!("project declares build tool {}", manifest.build_tool)));
        }
        if !self.toolchains.contains(&manifest.toolchain) {
            return Err(fail(format!("toolchain {} is not installed", manifest.toolchain)));
        }
        let sources = manifest.read_sources(&ws.source_dir).map_err(fail)?;
        for plugin in self.active_plugins(&manifest) {
            match plugin {
                "style-check" => {
                    let bad = style_violations(&sources);
                    if !bad.is_empty() {
                        return Err(fail(format!("style-check: whitespace violations at {}", bad.join(", "))));
                    }
                }
                "coverage-gate" | "integration-tests" => {}
                other => return Err(fail(format!("unknown plugin {other}"))),
            }
        }
        let parsed = run_with_timeout(timeout, move || minilang::parse_files(&sources))
            .ok_or_else(|| StepFailure { detail: format!("compile timed out after {}s", timeout.as_secs()), timed_out: true })?;
        let program = parsed.map_err(|e| fail(e.to_string()))?;
        let artifact = ws.dependency_cache_dir.join(PROGRAM_ARTIFACT);
        fs::create_dir_all(artifact.parent().unwrap()).map_err(|e| fail(e.to_string()))?;
        fs::write(&artifact, serde_json::to_vec(&program).expect("program serializes")).map_err(|e| fail(e.to_string()))?;
        Ok(())
    }

    fn run_tests(&self, ws: &Workspace, timeout: Duration) -> Result<std::path::PathBuf, StepFailure> {
        let manifest = ProjectManifest::load(&ws.source_dir).map_err(fail)?;
        let bytes = fs::read(ws.dependency_cache_dir.join(PROGRAM_ARTIFACT))
            .map_err(|_| fail("no compiled program in the workspace cache"))?;
        let program: Program = serde_json::from_slice(&bytes).map_err(|e| fail(format!("corrupt build artifact: {e}")))?;
        let plugins: Vec<String> = self.active_plugins(&manifest).into_iter().map(String::from).collect();
        if plugins.iter().any(|p| p == "integration-tests") {
            return Err(fail("integration-tests phase needs services that are not available in the workspace"));
        }
        let globals = manifest.globals(&self.env);
        let program = Arc::new(program);
        let shared = Arc::clone(&program);
        let run = run_with_timeout(timeout, move || {
            minilang::run_suite_with_env(&shared, "minilang", &Hooks::default(), &globals)
        })
        .ok_or_else(|| StepFailure { detail: format!("tests timed out after {}s", timeout.as_secs()), timed_out: true })?;
        let suite = run.map_err(|e| fail(format!("test harness crashed: {e}")))?;
        if plugins.iter().any(|p| p == "coverage-gate") {
            let covered: BTreeSet<_> = suite.traces.iter().flat_map(|t| t.covered.iter().copied()).collect();
            let app: Vec<_> = (0..program.stmt_count() as u32)
                .filter(|id| program.location(*id).is_some_and(|l| !l.function.starts_with("test_")))
                .collect();
            let hit = app.iter().filter(|id| covered.contains(id)).count();
            if !app.is_empty() && hit * 100 < app.len() * COVERAGE_GATE_PERCENT {
                return Err(fail(format!("coverage gate: {hit} of {} statements covered", app.len())));
            }
        }
        let xml = write_suite_xml(&suite.report.suites[0]);
        fs::write(ws.reports_dir.join("suite.xml"), xml).map_err(|e| fail(e.to_string()))?;
        Ok(ws.reports_dir.clone())
    }
}

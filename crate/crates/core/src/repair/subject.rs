use std::collections::BTreeMap;
use std::path::Path;

use crate::diff::{apply_to_tree, create_patch, DiffError};
use crate::minilang::{self, ExecutionTrace, Hooks, Program, Span, StmtId, Value};
use crate::reproducer::ProjectManifest;

use super::ochiai::CoverageMatrix;
use super::RepairError;

/// A program under repair: its sources, parsed form, environment and the
/// traces of the unmodified test suite.
#[derive(Debug, Clone)]
pub struct Subject {
    /// Relative path and text, in project order.
    pub files: Vec<(String, String)>,
    pub program: Program,
    pub globals: BTreeMap<String, Value>,
    pub baseline: Vec<ExecutionTrace>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Validation {
    pub adequate: bool,
    pub diagnostic: Option<String>,
}

impl Subject {
    pub fn new(files: Vec<(String, String)>, globals: BTreeMap<String, Value>) -> Result<Self, RepairError> {
        let program = minilang::parse_files(&files).map_err(|e| RepairError::Load(e.to_string()))?;
        let run = minilang::run_suite_with_env(&program, "minilang", &Hooks::default(), &globals)
            .map_err(|e| RepairError::Load(e.to_string()))?;
        Ok(Subject { files, program, globals, baseline: run.traces })
    }

    /// Loads the project checked out in `source_dir`. Multi-module projects
    /// are refused.
    pub fn load(source_dir: &Path, local_env: &BTreeMap<String, i64>) -> Result<Self, RepairError> {
        let manifest = ProjectManifest::load(source_dir).map_err(RepairError::Load)?;
        if manifest.is_multi_module() {
            return Err(RepairError::MultiModule(manifest.modules.clone()));
        }
        let files = manifest.read_sources(source_dir).map_err(RepairError::Load)?;
        Subject::new(files, manifest.globals(local_env))
    }

    pub fn failing(&self) -> impl Iterator<Item = &ExecutionTrace> {
        self.baseline.iter().filter(|t| !t.passed())
    }

    pub fn passing(&self) -> impl Iterator<Item = &ExecutionTrace> {
        self.baseline.iter().filter(|t| t.passed())
    }

    pub fn matrix(&self) -> CoverageMatrix {
        CoverageMatrix::from_traces(self.program.stmt_count(), &self.baseline)
    }

    pub fn run_test(&self, test: &str, hooks: &Hooks) -> ExecutionTrace {
        minilang::run_test_with_env(&self.program, test, hooks, &self.globals)
    }

    pub fn in_test_function(&self, id: StmtId) -> bool {
        self.program.location(id).is_some_and(|l| l.function.starts_with("test_"))
    }

    /// Source text of a statement.
    pub fn stmt_text(&self, id: StmtId) -> &str {
        let loc = &self.program.locations[id as usize];
        &self.files[loc.file].1[loc.span.start..loc.span.end]
    }

    /// Files with one span of one file replaced.
    pub fn replaced(&self, file: usize, span: Span, replacement: &str) -> Vec<(String, String)> {
        let mut files = self.files.clone();
        let text = &mut files[file].1;
        text.replace_range(span.start..span.end, replacement);
        files
    }

    pub fn diff(&self, patched: &[(String, String)]) -> String {
        self.files
            .iter()
            .zip(patched)
            .map(|((name, old), (_, new))| create_patch(name, old, new))
            .collect()
    }

    /// Adequate iff the patched program parses and every test passes.
    pub fn validate_files(&self, patched: &[(String, String)]) -> Validation {
        let program = match minilang::parse_files(patched) {
            Ok(p) => p,
            Err(e) => return Validation { adequate: false, diagnostic: Some(format!("patched program does not parse: {e}")) },
        };
        match minilang::run_suite_with_env(&program, "minilang", &Hooks::default(), &self.globals) {
            Ok(run) => {
                let failing: Vec<&str> = run.traces.iter().filter(|t| !t.passed()).map(|t| t.test.as_str()).collect();
                Validation {
                    adequate: failing.is_empty(),
                    diagnostic: (!failing.is_empty()).then(|| format!("still failing: {}", failing.join(", "))),
                }
            }
            Err(e) => Validation { adequate: false, diagnostic: Some(e.to_string()) },
        }
    }

    /// Applies a unified diff to the sources, then validates.
    pub fn validate_diff(&self, diff: &str) -> Result<Validation, DiffError> {
        let patched = self.apply(diff)?;
        Ok(self.validate_files(&patched))
    }

    pub fn apply(&self, diff: &str) -> Result<Vec<(String, String)>, DiffError> {
        let tree: BTreeMap<String, String> = self.files.iter().cloned().collect();
        let patched = apply_to_tree(&tree, diff)?;
        Ok(self.files.iter().map(|(name, _)| (name.clone(), patched[name].clone())).collect())
    }
}

//! Project selection and detection of builds worth repairing.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{BuildRecord, BuildTool, CiStatus, ProjectRef, Timestamp};

pub const DEFAULT_WINDOW: Duration = Duration::from_secs(4 * 3600);

/// All criteria must hold; `None` means "no constraint".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCriteria {
    pub min_stars: u64,
    #[serde(default)]
    pub activity_since: Option<Timestamp>,
    #[serde(default)]
    pub required_language_tag: Option<String>,
    #[serde(default)]
    pub required_build_tool: Option<BuildTool>,
    #[serde(default)]
    pub require_ci: bool,
}

impl SelectionCriteria {
    pub fn accepts(&self, p: &ProjectRef) -> bool {
        p.stars >= self.min_stars
            && self.activity_since.is_none_or(|t| p.last_activity >= t)
            && self.required_language_tag.as_ref().is_none_or(|l| &p.language_tag == l)
            && self.required_build_tool.is_none_or(|b| p.build_tool_tag == b)
            && (!self.require_ci || p.ci_enabled)
    }
}

pub fn select_projects(catalog: &[ProjectRef], criteria: &SelectionCriteria) -> Vec<ProjectRef> {
    catalog.iter().filter(|p| criteria.accepts(p)).cloned().collect()
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read catalog: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Reads a catalog with one JSON project record per line.
pub fn load_catalog(path: &Path) -> Result<Vec<ProjectRef>, CatalogError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: ProjectRef = serde_json::from_str(&line)
            .map_err(|e| CatalogError::Malformed { line: i + 1, message: e.to_string() })?;
        p.validate()
            .map_err(|e| CatalogError::Malformed { line: i + 1, message: e.to_string() })?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_catalog(path: &Path, catalog: &[ProjectRef]) -> std::io::Result<()> {
    let mut text = String::new();
    for p in catalog {
        text.push_str(&serde_json::to_string(p).expect("project serializes"));
        text.push('\n');
    }
    fs::write(path, text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSummary {
    pub run: u32,
    pub failures: u32,
    pub errors: u32,
    pub skipped: u32,
}

impl TestSummary {
    pub fn failing(&self) -> u32 {
        self.failures.saturating_add(self.errors)
    }
}

fn summary_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"Tests run: (\d+), Failures: (\d+), Errors: (\d+), Skipped: (\d+)").unwrap()
    })
}

/// Values of the last summary line in the log. Lines whose numbers do not
/// fit are ignored.
pub fn parse_test_summary(log: &str) -> Option<TestSummary> {
    summary_regex()
        .captures_iter(log)
        .filter_map(|c| {
            Some(TestSummary {
                run: c[1].parse().ok()?,
                failures: c[2].parse().ok()?,
                errors: c[3].parse().ok()?,
                skipped: c[4].parse().ok()?,
            })
        })
        .last()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evidence {
    CiMetadata,
    LogParse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterestingBuild {
    pub build: BuildRecord,
    pub failing_test_count: u32,
    pub evidence: Evidence,
}

/// Why a build was or was not kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Screening {
    Interesting(InterestingBuild),
    NotFailed,
    OutsideWindow,
    NoFailingTests,
    /// Failing build whose log has no recognizable test summary.
    LogOpaque,
}

impl Screening {
    pub fn interesting(self) -> Option<InterestingBuild> {
        match self {
            Screening::Interesting(b) => Some(b),
            _ => None,
        }
    }

    pub fn diagnostic(&self) -> Option<&'static str> {
        match self {
            Screening::LogOpaque => Some("log_opaque"),
            _ => None,
        }
    }
}

/// Applies the three conditions: failed status, at least one failing test
/// (CI metadata first, log summary otherwise), finished in `(now - window, now]`.
pub fn screen(build: &BuildRecord, log: &str, now: Timestamp, window: Duration) -> Screening {
    if build.ci_status != CiStatus::Failed {
        return Screening::NotFailed;
    }
    let age = now.seconds_since(build.finished_at);
    if age < 0 || age as u128 >= window.as_secs() as u128 {
        return Screening::OutsideWindow;
    }
    let (count, evidence) = match build.ci_failing_tests {
        Some(n) => (n, Evidence::CiMetadata),
        None => match parse_test_summary(log) {
            Some(s) => (s.failing(), Evidence::LogParse),
            None => return Screening::LogOpaque,
        },
    };
    if count == 0 {
        return Screening::NoFailingTests;
    }
    Screening::Interesting(InterestingBuild { build: build.clone(), failing_test_count: count, evidence })
}

pub fn is_interesting(build: &BuildRecord, log: &str, now: Timestamp, window: Duration) -> Option<InterestingBuild> {
    screen(build, log, now, window).interesting()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Trigger;
    use proptest::prelude::*;

    fn project(slug: &str, stars: u64, ci: bool) -> ProjectRef {
        ProjectRef {
            host_id: slug.into(),
            slug: slug.into(),
            default_branch: "master".into(),
            stars,
            last_activity: Timestamp::from_unix(1_000),
            language_tag: "java".into(),
            build_tool_tag: BuildTool::MavenLike,
            ci_enabled: ci,
        }
    }

    fn build(status: CiStatus, finished: i64, meta: Option<u32>) -> BuildRecord {
        BuildRecord {
            build_id: "b".into(),
            project: project("a/b", 1, true),
            trigger: Trigger::Push,
            commit_id: "c".into(),
            pr_base_commit: None,
            pr_head_commit: None,
            ci_status: status,
            finished_at: Timestamp::from_unix(finished),
            log_handle: "b.log".into(),
            ci_failing_tests: meta,
        }
    }

    #[test]
    fn selection_requires_every_criterion() {
        let mut low_stars = project("a/low", 2, true);
        low_stars.stars = 2;
        let mut no_ci = project("a/noci", 50, false);
        no_ci.ci_enabled = false;
        let mut old = project("a/old", 50, true);
        old.last_activity = Timestamp::from_unix(10);
        let good = project("a/good", 50, true);
        let catalog = vec![low_stars, no_ci, old, good.clone()];
        let criteria = SelectionCriteria {
            min_stars: 10,
            activity_since: Some(Timestamp::from_unix(500)),
            required_language_tag: Some("java".into()),
            required_build_tool: Some(BuildTool::MavenLike),
            require_ci: true,
        };
        assert_eq!(select_projects(&catalog, &criteria), vec![good]);
        assert_eq!(select_projects(&catalog, &SelectionCriteria::default()), catalog);
    }

    #[test]
    fn summary_grammar() {
        let s = parse_test_summary("Tests run: 7, Failures: 1, Errors: 0, Skipped: 0").unwrap();
        assert_eq!(s, TestSummary { run: 7, failures: 1, errors: 0, skipped: 0 });
        let two = "[INFO] Tests run: 3, Failures: 0, Errors: 0, Skipped: 0\n\
                   Results:\n[ERROR] Tests run: 12, Failures: 2, Errors: 1, Skipped: 1 <<< FAILURE\n";
        let s = parse_test_summary(two).unwrap();
        assert_eq!((s.run, s.failing(), s.skipped), (12, 3, 1));
        assert_eq!(parse_test_summary(""), None);
        assert_eq!(parse_test_summary("Tests run: 99999999999, Failures: 1, Errors: 0, Skipped: 0"), None);
    }

    #[test]
    fn screening_rules() {
        let now = Timestamp::from_unix(10_000);
        let w = Duration::from_secs(3600);
        let log = "Tests run: 12, Failures: 2, Errors: 0, Skipped: 1";
        assert_eq!(screen(&build(CiStatus::Passed, 9_000, None), log, now, w), Screening::NotFailed);
        assert_eq!(screen(&build(CiStatus::Errored, 9_000, None), log, now, w), Screening::NotFailed);
        let hit = is_interesting(&build(CiStatus::Failed, 9_000, None), log, now, w).unwrap();
        assert_eq!((hit.failing_test_count, hit.evidence), (2, Evidence::LogParse));
        let meta = is_interesting(&build(CiStatus::Failed, 9_000, Some(4)), log, now, w).unwrap();
        assert_eq!((meta.failing_test_count, meta.evidence), (4, Evidence::CiMetadata));
        let checkstyle = "[ERROR] Failed to execute goal checkstyle: 3 violations";
        let opaque = screen(&build(CiStatus::Failed, 9_000, None), checkstyle, now, w);
        assert_eq!(opaque.diagnostic(), Some("log_opaque"));
        // (now - window, now]
        assert!(is_interesting(&build(CiStatus::Failed, 10_000, None), log, now, w).is_some());
        assert!(is_interesting(&build(CiStatus::Failed, 6_401, None), log, now, w).is_some());
        assert!(is_interesting(&build(CiStatus::Failed, 6_400, None), log, now, w).is_none());
        assert!(is_interesting(&build(CiStatus::Failed, 10_001, None), log, now, w).is_none());
        let zero = "Tests run: 5, Failures: 0, Errors: 0, Skipped: 0";
        assert_eq!(screen(&build(CiStatus::Failed, 9_000, None), zero, now, w), Screening::NoFailingTests);
    }

    proptest! {
        #[test]
        fn summary_parser_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
            let text = String::from_utf8_lossy(&bytes);
            let _ = parse_test_summary(&text);
        }

        #[test]
        fn only_failed_builds_are_interesting(status in 0..4usize, meta in proptest::option::of(0u32..5)) {
            let status = [CiStatus::Passed, CiStatus::Failed, CiStatus::Errored, CiStatus::Canceled][status];
            let b = build(status, 9_000, meta);
            let got = is_interesting(&b, "Tests run: 2, Failures: 1, Errors: 0, Skipped: 0", Timestamp::from_unix(9_500), DEFAULT_WINDOW);
            if status != CiStatus::Failed {
                prop_assert!(got.is_none());
            }
        }

        #[test]
        fn shrinking_window_never_adds(finished in 0i64..20_000, big in 1u64..20_000, cut in 0u64..20_000) {
            let small = big.saturating_sub(cut).max(1);
            let b = build(CiStatus::Failed, finished, Some(1));
            let now = Timestamp::from_unix(15_000);
            let in_small = is_interesting(&b, "", now, Duration::from_secs(small)).is_some();
            let in_big = is_interesting(&b, "", now, Duration::from_secs(big)).is_some();
            prop_assert!(!in_small || in_big);
        }
    }
}

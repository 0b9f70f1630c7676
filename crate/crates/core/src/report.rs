//! Surefire-style XML test reports.
//!
//! Only a small subset is understood: a `<testsuite>` root (optionally wrapped
//! in `<testsuites>`) holding `<testcase>` elements, each optionally carrying
//! one `<failure>`, `<error>` or `<skipped>` child. Writing is byte-exact and
//! deterministic so reports can be compared by hash.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{extract_signature, FailureSignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Passed,
    Failed,
    Errored,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub name: String,
    pub status: CaseStatus,
    /// `type` attribute of the failure/error element.
    #[serde(default)]
    pub failure_type: String,
    #[serde(default)]
    pub message: String,
    #[serde(default)]
    pub trace: String,
    pub time: String,
}

impl TestCase {
    pub fn passed(name: impl Into<String>) -> Self {
        TestCase {
            name: name.into(),
            status: CaseStatus::Passed,
            failure_type: String::new(),
            message: String::new(),
            trace: String::new(),
            time: "0".into(),
        }
    }

    pub fn is_failing(&self) -> bool {
        matches!(self.status, CaseStatus::Failed | CaseStatus::Errored)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub name: String,
    pub tests: u32,
    pub failures: u32,
    pub errors: u32,
    pub skipped: u32,
    pub cases: Vec<TestCase>,
}

impl TestSuite {
    /// Builds a suite whose counters are the tally of `cases`.
    pub fn from_cases(name: impl Into<String>, cases: Vec<TestCase>) -> Self {
        let mut suite = TestSuite {
            name: name.into(),
            tests: 0,
            failures: 0,
            errors: 0,
            skipped: 0,
            cases,
        };
        suite.recount();
        suite
    }

    fn tally(&self) -> (u32, u32, u32, u32) {
        let count = |s: CaseStatus| self.cases.iter().filter(|c| c.status == s).count() as u32;
        (
            self.cases.len() as u32,
            count(CaseStatus::Failed),
            count(CaseStatus::Errored),
            count(CaseStatus::Skipped),
        )
    }

    fn recount(&mut self) -> bool {
        let tally = self.tally();
        let matches = tally == (self.tests, self.failures, self.errors, self.skipped);
        (self.tests, self.failures, self.errors, self.skipped) = tally;
        matches
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub suites: Vec<TestSuite>,
    /// Reconciliation notes, e.g. attribute/case-count mismatches.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl TestReport {
    pub fn tests(&self) -> u32 {
        self.suites.iter().map(|s| s.tests).sum()
    }

    pub fn failures(&self) -> u32 {
        self.suites.iter().map(|s| s.failures).sum()
    }

    pub fn errors(&self) -> u32 {
        self.suites.iter().map(|s| s.errors).sum()
    }

    pub fn skipped(&self) -> u32 {
        self.suites.iter().map(|s| s.skipped).sum()
    }

    /// Failures plus errors.
    pub fn failing(&self) -> u32 {
        self.failures() + self.errors()
    }

    pub fn cases(&self) -> impl Iterator<Item = &TestCase> {
        self.suites.iter().flat_map(|s| s.cases.iter())
    }

    pub fn failing_test_names(&self) -> Vec<String> {
        self.cases()
            .filter(|c| c.is_failing())
            .map(|c| c.name.clone())
            .collect()
    }

    /// One signature per failing case. The trace head wins over the `type`
    /// attribute; the attribute is the fallback when the trace is unusable.
    pub fn signatures(&self) -> Vec<FailureSignature> {
        self.cases()
            .filter(|c| c.is_failing())
            .filter_map(|c| {
                let mut sig = extract_signature(&c.trace)
                    .or_else(|_| extract_signature(&c.failure_type))
                    .ok()?;
                sig.failing_test_name = c.name.clone();
                Some(sig)
            })
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no report files under {0}")]
    Missing(PathBuf),
    #[error("cannot read report {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed report {path}: {reason}")]
    Malformed { path: String, reason: String },
}

fn escape(text: &str, out: &mut String) {
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
}

/// Renders one suite in the canonical layout.
pub fn write_suite_xml(suite: &TestSuite) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<testsuite name=\"");
    escape(&suite.name, &mut out);
    let _ = writeln!(
        out,
        "\" tests=\"{}\" failures=\"{}\" errors=\"{}\" skipped=\"{}\">",
        suite.tests, suite.failures, suite.errors, suite.skipped
    );
    for case in &suite.cases {
        out.push_str("  <testcase name=\"");
        escape(&case.name, &mut out);
        out.push_str("\" time=\"");
        escape(&case.time, &mut out);
        out.push('"');
        let tag = match case.status {
            CaseStatus::Passed => {
                out.push_str("/>\n");
                continue;
            }
            CaseStatus::Skipped => {
                out.push_str(">\n    <skipped/>\n  </testcase>\n");
                continue;
            }
            CaseStatus::Failed => "failure",
            CaseStatus::Errored => "error",
        };
        let _ = write!(out, ">\n    <{tag} message=\"");
        escape(&case.message, &mut out);
        out.push_str("\" type=\"");
        escape(&case.failure_type, &mut out);
        out.push_str("\">");
        escape(&case.trace, &mut out);
        let _ = write!(out, "</{tag}>\n  </testcase>\n");
    }
    out.push_str("</testsuite>\n");
    out
}

fn count_attr(node: roxmltree::Node<'_, '_>, name: &str, origin: &str) -> Result<u32, ReportError> {
    match node.attribute(name) {
        None => Ok(0),
        Some(raw) => raw.trim().parse().map_err(|_| ReportError::Malformed {
            path: origin.to_string(),
            reason: format!("attribute {name}=\"{raw}\" is not a count"),
        }),
    }
}

fn parse_suite(node: roxmltree::Node<'_, '_>, origin: &str, warnings: &mut Vec<String>) -> Result<TestSuite, ReportError> {
    let mut cases = Vec::new();
    for case in node.children().filter(|n| n.has_tag_name("testcase")) {
        let name = case.attribute("name").unwrap_or_default().to_string();
        let mut tc = TestCase::passed(name);
        tc.time = case.attribute("time").unwrap_or("0").to_string();
        for child in case.children().filter(|n| n.is_element()) {
            let status = match child.tag_name().name() {
                "failure" => CaseStatus::Failed,
                "error" => CaseStatus::Errored,
                "skipped" => CaseStatus::Skipped,
                _ => continue,
            };
            tc.status = status;
            tc.message = child.attribute("message").unwrap_or_default().to_string();
            tc.failure_type = child.attribute("type").unwrap_or_default().to_string();
            tc.trace = child.text().unwrap_or_default().to_string();
            break;
        }
        cases.push(tc);
    }

    let mut suite = TestSuite {
        name: node.attribute("name").unwrap_or_default().to_string(),
        tests: count_attr(node, "tests", origin)?,
        failures: count_attr(node, "failures", origin)?,
        errors: count_attr(node, "errors", origin)?,
        skipped: count_attr(node, "skipped", origin)?,
        cases,
    };
    let declared = (suite.tests, suite.failures, suite.errors, suite.skipped);
    if !suite.recount() {
        warnings.push(format!(
            "{origin}: suite `{}` declares tests={} failures={} errors={} skipped={} but its cases tally tests={} failures={} errors={} skipped={}",
            suite.name, declared.0, declared.1, declared.2, declared.3,
            suite.tests, suite.failures, suite.errors, suite.skipped
        ));
    }
    Ok(suite)
}

/// Parses one report document. `origin` labels warnings and errors.
pub fn parse_report_str(xml: &str, origin: &str) -> Result<TestReport, ReportError> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| ReportError::Malformed {
        path: origin.to_string(),
        reason: e.to_string(),
    })?;
    let root = doc.root_element();
    let mut report = TestReport::default();
    match root.tag_name().name() {
        "testsuite" => {
            let suite = parse_suite(root, origin, &mut report.warnings)?;
            report.suites.push(suite);
        }
        "testsuites" => {
            for node in root.children().filter(|n| n.has_tag_name("testsuite")) {
                let suite = parse_suite(node, origin, &mut report.warnings)?;
                report.suites.push(suite);
            }
        }
        other => {
            return Err(ReportError::Malformed {
                path: origin.to_string(),
                reason: format!("unexpected root element <{other}>"),
            })
        }
    }
    Ok(report)
}

/// Parses and merges every `*.xml` file in `dir`, in file-name order.
pub fn parse_report_dir(dir: &Path) -> Result<TestReport, ReportError> {
    let mut files: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "xml"))
            .collect(),
        Err(_) => return Err(ReportError::Missing(dir.to_path_buf())),
    };
    if files.is_empty() {
        return Err(ReportError::Missing(dir.to_path_buf()));
    }
    files.sort();
    let mut merged = TestReport::default();
    for path in files {
        let text = fs::read_to_string(&path).map_err(|source| ReportError::Io {
            path: path.clone(),
            source,
        })?;
        let part = parse_report_str(&text, &path.display().to_string())?;
        merged.suites.extend(part.suites);
        merged.warnings.extend(part.warnings);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const THREE_ONE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<testsuite name="demo" tests="3" failures="1" errors="0" skipped="0">
  <testcase name="a" time="0.01"/>
  <testcase name="b" time="0">
    <failure message="x" type="java.lang.AssertionError">java.lang.AssertionError: x
	at Demo.b(Demo.java:9)</failure>
  </testcase>
  <testcase name="c" time="0"/>
</testsuite>
"#;

    #[test]
    fn direct_mapping_of_counts() {
        let report = parse_report_str(THREE_ONE, "t").unwrap();
        assert_eq!((report.tests(), report.failures()), (3, 1));
        assert!(report.warnings.is_empty());
        assert_eq!(report.failing_test_names(), vec!["b".to_string()]);
    }

    #[test]
    fn failing_case_yields_assertion_signature() {
        let sigs = parse_report_str(THREE_ONE, "t").unwrap().signatures();
        assert_eq!(sigs.len(), 1);
        assert_eq!(sigs[0].exception_type, "java.lang.AssertionError");
        assert_eq!(sigs[0].failing_test_name, "b");
    }

    #[test]
    fn cases_win_over_mismatching_attributes() {
        let xml = THREE_ONE.replace("tests=\"3\"", "tests=\"4\"");
        let report = parse_report_str(&xml, "t").unwrap();
        assert_eq!(report.tests(), 3);
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("tests=4"));
    }

    #[test]
    fn malformed_xml_is_an_error() {
        assert!(matches!(
            parse_report_str("<testsuite name=\"x\"><testcase>", "t"),
            Err(ReportError::Malformed { .. })
        ));
        assert!(parse_report_str("<html/>", "t").is_err());
        assert!(parse_report_str(&THREE_ONE.replace("\"3\"", "\"three\""), "t").is_err());
    }

    #[test]
    fn wrapped_suites_and_skips() {
        let xml = r#"<testsuites><testsuite name="s" tests="2" skipped="1">
            <testcase name="x"><skipped/></testcase><testcase name="y"><error type="E">E: boom</error></testcase>
        </testsuite></testsuites>"#;
        let report = parse_report_str(xml, "t").unwrap();
        assert_eq!((report.tests(), report.skipped(), report.errors()), (2, 1, 1));
        assert_eq!(report.warnings.len(), 1, "errors attribute was missing");
    }

    #[test]
    fn writer_layout_is_stable() {
        let mut failing = TestCase::passed("test_b");
        failing.status = CaseStatus::Failed;
        failing.failure_type = "AssertionFailed".into();
        failing.message = "a < b & \"c\"".into();
        failing.trace = "AssertionFailed: a < b".into();
        let suite = TestSuite::from_cases("s", vec![TestCase::passed("test_a"), failing]);
        let xml = write_suite_xml(&suite);
        let expected = [
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>",
            "<testsuite name=\"s\" tests=\"2\" failures=\"1\" errors=\"0\" skipped=\"0\">",
            "  <testcase name=\"test_a\" time=\"0\"/>",
            "  <testcase name=\"test_b\" time=\"0\">",
            "    <failure message=\"a &lt; b &amp; &quot;c&quot;\" type=\"AssertionFailed\">AssertionFailed: a &lt; b</failure>",
            "  </testcase>",
            "</testsuite>",
            "",
        ]
        .join("\n");
        assert_eq!(xml, expected);
    }

    fn case_strategy() -> impl Strategy<Value = TestCase> {
        (
            "[a-z_]{1,8}",
            prop_oneof![
                Just(CaseStatus::Passed),
                Just(CaseStatus::Failed),
                Just(CaseStatus::Errored),
                Just(CaseStatus::Skipped)
            ],
            "[ -~]{0,20}",
        )
            .prop_map(|(name, status, text)| {
                let mut c = TestCase::passed(name);
                c.status = status;
                if c.is_failing() {
                    c.failure_type = "Boom".into();
                    c.message = text.clone();
                    c.trace = format!("Boom: {text}");
                }
                c
            })
    }

    proptest! {
        #[test]
        fn written_reports_parse_back_with_conserved_counts(cases in proptest::collection::vec(case_strategy(), 0..12)) {
            let suite = TestSuite::from_cases("p", cases);
            let report = parse_report_str(&write_suite_xml(&suite), "p").unwrap();
            prop_assert!(report.warnings.is_empty());
            prop_assert_eq!(&report.suites[0], &suite);
            let s = &report.suites[0];
            prop_assert_eq!(s.tests, s.cases.len() as u32);
        }
    }
}

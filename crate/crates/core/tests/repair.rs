use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::sync::Arc;
use std::time::{Duration, Instant};

use repairbot::ci::{CiBackend, FixtureCi};
use repairbot::diff::apply_to_tree;
use repairbot::fixtures::{extra_feed, seeded_condition_bugs, source_tree, standard_feed, write_project_dir};
use repairbot::minilang::{self, parse_expr, Bindings, Value};
use repairbot::model::{FailureSignature, OverfittingFlag, Timestamp};
use repairbot::repair::{
    flag_overfitting, RepairEngine, RepairError, Subject, ToolRegistry, CONDITION_SYNTH, NPE_GUARD,
};
use repairbot::reproducer::{Adapters, Reproducer, ReproducerConfig, Workspace};

fn suite_passes(files: &BTreeMap<String, String>) -> bool {
    let files: Vec<(String, String)> = files.clone().into_iter().collect();
    let program = minilang::parse_files(&files).unwrap();
    minilang::run_suite(&program).unwrap().all_passed()
}

fn sig(t: &str) -> FailureSignature {
    FailureSignature { exception_type: t.into(), failing_test_name: "t".into(), detail: String::new() }
}

#[test]
fn standard_feed_repairs() {
    let dir = tempfile::tempdir().unwrap();
    let feed = standard_feed(&dir.path().join("feed")).unwrap();
    let ci = Arc::new(FixtureCi::open(&feed.root).unwrap());
    let r = Reproducer::new(ci.clone(), Adapters::standard(), ReproducerConfig::new(dir.path().join("work")));
    let engine = RepairEngine::default();
    for id in ["b1", "b2", "b3"] {
        let a = r.reproduce(&ci.get_build(id).unwrap());
        let ws = a.workspace.as_ref().unwrap();
        let before = repairbot::reproducer::ProjectManifest::load(&ws.source_dir)
            .unwrap()
            .read_sources(&ws.source_dir)
            .unwrap();
        let report = engine.repair(&a.result, ws, Timestamp::from_unix(0)).unwrap();
        let first = report.adequate().next().map(|p| p.tool_name.as_str());
        assert_eq!(first, feed.expectation(id).unwrap().patched_by.as_deref(), "{id}: {report:#?}");
        for p in report.adequate() {
            p.validate().unwrap();
            let patched = apply_to_tree(&source_tree(&before), &p.edit).unwrap();
            assert!(suite_passes(&patched), "{id}: {}", p.edit);
        }
        if id == "b2" {
            let best = report.adequate().next().unwrap();
            assert!(best.edit.contains("+    if (!(qty < 10)) {"), "{}", best.edit);
            assert_eq!(best.overfitting_flags, BTreeSet::from([OverfittingFlag::None]));
        }
        ws.remove().unwrap();
    }
}

#[test]
fn null_guard_patch_for_b1() {
    let dir = tempfile::tempdir().unwrap();
    let feed = standard_feed(&dir.path().join("feed")).unwrap();
    let ci = Arc::new(FixtureCi::open(&feed.root).unwrap());
    let r = Reproducer::new(ci.clone(), Adapters::standard(), ReproducerConfig::new(dir.path().join("work")));
    let a = r.reproduce(&ci.get_build("b1").unwrap());
    let report = RepairEngine::default().repair(&a.result, a.workspace.as_ref().unwrap(), Timestamp::from_unix(0)).unwrap();
    assert_eq!(report.failure_type, "NullDeref");
    assert_eq!(report.runs[0].tool, NPE_GUARD);
    let guards: Vec<_> = report.patches.iter().filter(|p| p.tool_name == NPE_GUARD).collect();
    assert!(guards[0].edit.contains("+    if (coupon != null) { sum = sum - coupon.amount; }"), "{}", guards[0].edit);
    assert!(guards.iter().any(|p| p.edit.contains("coupon = {amount: 0};")));
    assert!(guards.iter().all(|p| p.adequate));
}

#[test]
fn seeded_condition_bugs_are_repaired() {
    let engine = RepairEngine::default();
    for bug in seeded_condition_bugs() {
        let subject = Subject::new(bug.sources.clone(), BTreeMap::new()).unwrap();
        assert!(subject.failing().count() >= 1, "{}", bug.name);
        let start = Instant::now();
        let report = engine.repair_subject(bug.name, &[sig("AssertionFailed")], &subject, None, Timestamp::from_unix(0));
        assert!(start.elapsed() < Duration::from_secs(60));
        let patch = report
            .adequate()
            .find(|p| p.tool_name == CONDITION_SYNTH)
            .unwrap_or_else(|| panic!("{}: {:#?}", bug.name, report.runs));
        let patched = apply_to_tree(&source_tree(&bug.sources), &patch.edit).unwrap();
        assert!(suite_passes(&patched), "{}", bug.name);
    }
}

#[test]
fn unrepairable_failures_yield_no_adequate_patch() {
    let sources = vec![
        ("src/m.ml".to_string(), "fn add(a, b) {\n    return a - b;\n}\n".to_string()),
        ("src/m_test.ml".to_string(), "fn test_add() {\n    assert add(2, 3) == 5;\n}\n\nfn test_zero() {\n    assert add(4, 0) == 4;\n}\n".to_string()),
    ];
    let subject = Subject::new(sources, BTreeMap::new()).unwrap();
    let report = RepairEngine::default().repair_subject("m", &[sig("AssertionFailed")], &subject, None, Timestamp::from_unix(0));
    assert_eq!(report.adequate().count(), 0);
    assert!(report.runs.iter().all(|r| r.adequate == 0));
}

#[test]
fn multi_module_projects_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let feed = extra_feed(&dir.path().join("feed")).unwrap();
    let ci = Arc::new(FixtureCi::open(&feed.root).unwrap());
    let r = Reproducer::new(ci.clone(), Adapters::standard(), ReproducerConfig::new(dir.path().join("work")));
    let a = r.reproduce(&ci.get_build("x3").unwrap());
    let err = RepairEngine::default().repair(&a.result, a.workspace.as_ref().unwrap(), Timestamp::from_unix(0)).unwrap_err();
    assert!(matches!(err, RepairError::MultiModule(ref m) if m.len() >= 2), "{err}");
}

#[test]
fn overfitting_flags() {
    let snaps: Vec<Bindings> = (0..4).map(|i| vec![("x".to_string(), Value::Int(i))]).collect();
    let flags = |text: &str| flag_overfitting(Some(&parse_expr(text).unwrap()), &snaps);
    assert_eq!(flags("x < 2"), BTreeSet::from([OverfittingFlag::None]));
    assert_eq!(flags("x < 100"), BTreeSet::from([OverfittingFlag::ConstantPredicate]));
    assert_eq!(
        flags("x == x"),
        BTreeSet::from([OverfittingFlag::ConstantPredicate, OverfittingFlag::SyntacticTautology])
    );
    assert_eq!(
        flags("!(false)"),
        BTreeSet::from([OverfittingFlag::ConstantPredicate, OverfittingFlag::SyntacticTautology])
    );
    assert_eq!(flags("x != x").len(), 2);
    // Evaluation errors on some snapshot mean the predicate is not constant.
    let mixed = vec![vec![("x".to_string(), Value::Int(1))], vec![("x".to_string(), Value::Null)]];
    assert_eq!(
        flag_overfitting(Some(&parse_expr("x < 5").unwrap()), &mixed),
        BTreeSet::from([OverfittingFlag::None])
    );
    assert_eq!(flag_overfitting(None, &snaps), BTreeSet::from([OverfittingFlag::None]));
}

fn external_workspace(dir: &std::path::Path) -> (Workspace, Subject) {
    let bug = seeded_condition_bugs().into_iter().find(|b| b.name == "sign-boundary").unwrap();
    let ws = Workspace::create(dir, "ext").unwrap();
    write_project_dir(&ws.source_dir, &bug.sources).unwrap();
    let subject = Subject::load(&ws.source_dir, &BTreeMap::new()).unwrap();
    (ws, subject)
}

fn only_external(command: &str, timeout: Duration) -> RepairEngine {
    RepairEngine::new(ToolRegistry { tools: Vec::new() }.with_external("ext", command, timeout))
}

#[test]
fn external_tool_protocol() {
    let dir = tempfile::tempdir().unwrap();
    let (ws, subject) = external_workspace(dir.path());
    let good = subject.diff(&subject.replaced(0, {
        let text = &subject.files[0].1;
        let start = text.find("x < 0").unwrap();
        minilang::Span { start, end: start + 5 }
    }, "x <= 0"));
    let response = serde_json::json!({
        "patches": [
            {"diff": good, "note": "boundary"},
            {"diff": "--- a/src/nowhere.ml\n+++ b/src/nowhere.ml\n@@ -1 +1 @@\n-a\n+b\n", "note": "bad"},
        ]
    });
    let tool = dir.path().join("tool.sh");
    // The tool checks the request it was sent before answering.
    fs::write(
        &tool,
        format!(
            "#!/bin/sh\nreq=$(cat)\ncase \"$req\" in *test_zero*) ;; *) exit 9;; esac\ncat <<'EOF'\n{}\nEOF\n",
            response
        ),
    )
    .unwrap();
    let engine = only_external(&format!("sh {}", tool.display()), Duration::from_secs(30));
    let report = engine.repair_subject("s", &[sig("AssertionFailed")], &subject, Some(&ws), Timestamp::from_unix(0));
    assert_eq!(report.patches.len(), 1, "{report:#?}");
    assert!(report.patches[0].adequate);
    assert_eq!(report.patches[0].tool_name, "ext");
    assert!(report.runs[0].diagnostics[0].contains("discarded"));

    for (command, expect) in [
        ("echo not json", "malformed"),
        ("exit 4", "exited"),
        ("sleep 5", "timed out"),
    ] {
        let engine = only_external(command, Duration::from_secs(1));
        let report = engine.repair_subject("s", &[sig("AssertionFailed")], &subject, Some(&ws), Timestamp::from_unix(0));
        assert!(report.patches.is_empty());
        assert!(report.runs[0].diagnostics[0].contains(expect), "{:?}", report.runs[0].diagnostics);
    }
}

mod common;

use common::*;
use repairbot::archive::read_archive;

#[test]
fn scan_lists_interesting_builds() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    let out = dir.path().join("scan.jsonl");
    let mut c = bin(&state(dir.path()));
    c.args(["scan", "--feed"]).arg(&feed.root).arg("--catalog").arg(&feed.catalog);
    c.args(["--window-hours", "6", "--end", END, "--out"]).arg(&out);
    ok(c);
    let ids: Vec<String> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["build"]["build_id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids, ["b1", "b2", "b3", "b4", "b5"]);

    // The first hour holds b1 only.
    let mut c = bin(&state(dir.path()));
    c.args(["scan", "--feed"]).arg(&feed.root).args(["--window-hours", "1", "--end", "2017-01-15T01:00:00Z"]);
    assert_eq!(ok(c).lines().count(), 1);
}

#[test]
fn run_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    let report: serde_json::Value = serde_json::from_str(&ok(run_cmd(&state(dir.path()), &feed))).unwrap();
    assert_eq!(report["stats"]["interesting"], 5);
    assert_eq!(report["stats"]["patched_builds"], 2);
    assert!(read_archive(&state(dir.path()).join("archive.jsonl")).unwrap().len() > 10);

    let mut c = bin(&state(dir.path()));
    c.args(["stats", "--table", "reproduced"]);
    let csv = ok(c);
    assert_eq!(csv.lines().last().unwrap(), "Total on 5 projects,5,3,60.00%");

    let mut c = bin(&state(dir.path()));
    c.args(["stats", "--format", "doc", "--table", "4", "--window", "2017-01-15T00:00:00Z/2017-01-15T01:00:00Z"]);
    let doc: serde_json::Value = serde_json::from_str(&ok(c)).unwrap();
    assert_eq!(doc["rows"][0], serde_json::json!(["NullDeref", "1"]));

    let mut c = bin(&state(dir.path()));
    c.args(["stats", "--format", "xml"]);
    assert!(!c.output().unwrap().status.success());
}

#[test]
fn reproduce_and_repair_single_builds() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    let mut c = bin(&state(dir.path()));
    c.args(["reproduce", "--feed"]).arg(&feed.root).args(["--build", "b4", "--build", "b5", "--keep-workspace"]);
    let text = ok(c);
    let docs: Vec<serde_json::Value> =
        serde_json::Deserializer::from_str(&text).into_iter().collect::<Result<_, _>>().unwrap();
    let outcomes: Vec<&str> = docs.iter().map(|d| d["result"]["outcome"].as_str().unwrap()).collect();
    assert_eq!(outcomes, ["not_reproduced", "checkout_error"]);
    assert!(docs.iter().all(|d| std::path::Path::new(d["workspace"].as_str().unwrap()).is_dir()));

    let mut c = bin(&state(dir.path()));
    c.args(["repair", "--feed"]).arg(&feed.root).args(["--build", "b2", "--tools", "condition-synth", "--max-patches", "1"]);
    let report: serde_json::Value = serde_json::from_str(&ok(c)).unwrap();
    let patches = report["patches"].as_array().unwrap();
    assert_eq!(patches.iter().filter(|p| p["adequate"] == true).count(), 1);
    assert!(patches[0]["edit"].as_str().unwrap().contains("if (!(qty < 10))"));

    let mut c = bin(&state(dir.path()));
    c.args(["repair", "--feed"]).arg(&feed.root).args(["--build", "b2", "--tools", "astor"]);
    let out = c.output().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown tool `astor`"));
}

#[test]
fn external_tools_from_a_registry_file() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    let tools = dir.path().join("tools.toml");
    // A tool that answers with one diff regardless of the request.
    let diff = "--- a/src/pricing.ml\n+++ b/src/pricing.ml\n@@ -3,3 +3,3 @@\n     let rate = 0;\n-    if (qty > 10) {\n+    if (qty >= 10) {\n         rate = 5;\n";
    let response = dir.path().join("response.json");
    std::fs::write(&response, serde_json::json!({ "patches": [{ "diff": diff, "note": "ge" }] }).to_string()).unwrap();
    let command = format!("cat > /dev/null; cat '{}'", response.display());
    let registry = format!("[[tools]]\nname = \"echo-fix\"\nkind = \"external\"\ncommand = {}\n", toml_string(&command));
    std::fs::write(&tools, registry).unwrap();
    let mut c = bin(&state(dir.path()));
    c.args(["repair", "--feed"]).arg(&feed.root).args(["--build", "b2", "--tools-file"]).arg(&tools);
    let report: serde_json::Value = serde_json::from_str(&ok(c)).unwrap();
    assert_eq!(report["runs"][0]["tool"], "echo-fix", "{report:#}");
    assert_eq!(report["patches"][0]["adequate"], true, "{report:#}");
}

#[test]
fn init_fixture_writes_a_usable_feed() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = bin(&state(dir.path()));
    c.current_dir(dir.path()).args(["init-fixture", "--dir", "relative-feed", "--extra"]);
    let doc: serde_json::Value = serde_json::from_str(&ok(c)).unwrap();
    let root = doc["feed"].as_str().unwrap();
    assert!(std::path::Path::new(root).is_absolute());
    let mut c = bin(&state(dir.path()));
    c.args(["reproduce", "--feed", root, "--build", "x1"]);
    assert!(ok(c).contains("\"compile_error\""));
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).unwrap()
}

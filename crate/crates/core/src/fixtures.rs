//! Builders for on-disk fixture feeds: minilang projects in local git
//! repositories, build logs, a `feed.manifest` and a project catalog.
//!
//! Everything is deterministic: commit dates and identities are fixed, so
//! commit ids and tree hashes are identical on every machine.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::ci::{BuildDescriptor, FeedManifest};
use crate::model::{BuildTool, CiStatus, Outcome, ProjectRef, Timestamp, Trigger};
use crate::reproducer::{ProjectManifest, DEFAULT_TOOLCHAIN, PROJECT_MANIFEST};
use crate::scanner::write_catalog;
use crate::vcs::{self, GitError};

/// 2017-01-15T00:00:00Z; fixture builds finish in the four hours after it.
pub const BASE_TIME: i64 = 1_484_438_400;
pub const CATALOG_NAME: &str = "catalog.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Git(#[from] GitError),
    #[error("fixture invariant broken: {0}")]
    Broken(String),
}

/// What the fixture author expects the pipeline to do with one build.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub build_id: String,
    pub outcome: Outcome,
    pub interesting: bool,
    /// Tool expected to produce an adequate patch, if any.
    pub patched_by: Option<&'static str>,
}

#[derive(Debug, Clone)]
pub struct FixtureFeed {
    pub root: PathBuf,
    pub catalog: PathBuf,
    pub expectations: Vec<Expectation>,
}

impl FixtureFeed {
    pub fn expectation(&self, build_id: &str) -> Option<&Expectation> {
        self.expectations.iter().find(|e| e.build_id == build_id)
    }

    /// Window `[start, end)` covering every build of the feed.
    pub fn full_window(&self) -> crate::model::TimeWindow {
        crate::model::TimeWindow::new(Timestamp::from_unix(BASE_TIME), Timestamp::from_unix(BASE_TIME + 6 * 3600))
    }
}

/// A local repository being authored.
pub struct RepoBuilder {
    pub path: PathBuf,
}

impl RepoBuilder {
    pub fn init(path: &Path) -> Result<Self, FixtureError> {
        fs::create_dir_all(path)?;
        vcs::git(path, &["init", "-q"])?;
        Ok(RepoBuilder { path: path.to_path_buf() })
    }

    pub fn write(&self, rel: &str, text: &str) -> Result<&Self, FixtureError> {
        let p = self.path.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(p, text)?;
        Ok(self)
    }

    pub fn write_project(&self, manifest: &ProjectManifest, files: &[(&str, &str)]) -> Result<&Self, FixtureError> {
        self.write(PROJECT_MANIFEST, &manifest.to_toml())?;
        for (rel, text) in files {
            self.write(rel, text)?;
        }
        Ok(self)
    }

    pub fn commit(&self, message: &str, unix_time: i64) -> Result<String, FixtureError> {
        Ok(vcs::commit_all(&self.path, message, unix_time)?)
    }

    pub fn git(&self, args: &[&str]) -> Result<String, FixtureError> {
        Ok(vcs::git(&self.path, args)?)
    }
}

pub fn minibuild_manifest(sources: &[&str]) -> ProjectManifest {
    ProjectManifest {
        build_tool: BuildTool::FixtureMinibuild,
        toolchain: DEFAULT_TOOLCHAIN.to_string(),
        sources: sources.iter().map(|s| s.to_string()).collect(),
        modules: Vec::new(),
        plugins: vec!["style-check".into(), "coverage-gate".into()],
        env: Vec::new(),
    }
}

pub fn project(slug: &str, stars: u64) -> ProjectRef {
    ProjectRef {
        host_id: format!("gh-{}", slug.replace('/', "-")),
        slug: slug.to_string(),
        default_branch: "master".to_string(),
        stars,
        last_activity: Timestamp::from_unix(BASE_TIME - 86_400),
        language_tag: "minilang".to_string(),
        build_tool_tag: BuildTool::FixtureMinibuild,
        ci_enabled: true,
    }
}

fn failing_log(run: u32, failures: u32, errors: u32) -> String {
    format!(
        "$ minibuild test\n\
         [INFO] Running minilang suite\n\
         [INFO] Tests run: {run}, Failures: {failures}, Errors: {errors}, Skipped: 0\n\
         [INFO] Results:\n\
         [ERROR] Tests run: {run}, Failures: {failures}, Errors: {errors}, Skipped: 0\n\
         [ERROR] BUILD FAILURE\n"
    )
}

struct Authoring<'a> {
    root: &'a Path,
    manifest: FeedManifest,
    expectations: Vec<Expectation>,
    catalog: Vec<ProjectRef>,
}

impl<'a> Authoring<'a> {
    fn repo(&self, name: &str) -> Result<RepoBuilder, FixtureError> {
        RepoBuilder::init(&self.root.join("repos").join(name))
    }

    fn log(&self, build_id: &str, text: &str) -> Result<String, FixtureError> {
        let rel = format!("logs/{build_id}.log");
        fs::create_dir_all(self.root.join("logs"))?;
        fs::write(self.root.join(&rel), text)?;
        Ok(rel)
    }

    fn add_project(&mut self, p: ProjectRef) {
        self.catalog.push(p.clone());
        self.manifest.projects.push(p);
    }

    #[allow(clippy::too_many_arguments)]
    fn add_build(
        &mut self,
        build_id: &str,
        slug: &str,
        repo: &str,
        commit: &str,
        finished: i64,
        status: CiStatus,
        log: &str,
        expect: (Outcome, bool, Option<&'static str>),
    ) -> Result<&mut BuildDescriptor, FixtureError> {
        let log = self.log(build_id, log)?;
        self.manifest.builds.push(BuildDescriptor {
            build_id: build_id.to_string(),
            project: slug.to_string(),
            trigger: Trigger::Push,
            commit_id: commit.to_string(),
            pr_base_commit: None,
            pr_head_commit: None,
            ci_status: status,
            finished_at: Timestamp::from_unix(finished),
            log,
            repo: format!("repos/{repo}"),
            ci_failing_tests: None,
            merge_tree: None,
        });
        self.expectations.push(Expectation {
            build_id: build_id.to_string(),
            outcome: expect.0,
            interesting: expect.1,
            patched_by: expect.2,
        });
        Ok(self.manifest.builds.last_mut().unwrap())
    }

    fn finish(self, extra_catalog: Vec<ProjectRef>) -> Result<FixtureFeed, FixtureError> {
        self.manifest.write(self.root)?;
        let mut catalog = self.catalog;
        catalog.extend(extra_catalog);
        let catalog_path = self.root.join(CATALOG_NAME);
        write_catalog(&catalog_path, &catalog)?;
        Ok(FixtureFeed { root: self.root.to_path_buf(), catalog: catalog_path, expectations: self.expectations })
    }
}

const ORDER_SRC: &str = "\
// Order totals.
fn total(order) {
    let sum = order.base;
    let coupon = order.coupon;
    sum = sum - coupon.amount;
    return sum;
}
";

const ORDER_TEST: &str = "\
fn test_with_coupon() {
    assert total({base: 10, coupon: {amount: 3}}) == 7;
}

fn test_without_coupon() {
    assert total({base: 10, coupon: null}) == 10;
}
";

const PRICING_SRC: &str = "\
// Volume discounts, in percent.
fn discount(qty) {
    let rate = 0;
    if (qty > 10) {
        rate = 5;
    }
    return rate;
}
";

const PRICING_TEST: &str = "\
fn test_small_order() {
    assert discount(3) == 0;
}

fn test_large_order() {
    assert discount(20) == 5;
}
";

const PRICING_BOUNDARY_TEST: &str = "\
fn test_boundary_order() {
    assert discount(10) == 5;
}
";

const MATH_SRC: &str = "\
fn add(a, b) {
    return a - b;
}
";

const MATH_TEST: &str = "\
fn test_add_zero() {
    assert add(0, 0) == 0;
}

fn test_add() {
    assert add(2, 3) == 5;
}
";

const RETRY_SRC: &str = "\
fn retry_budget(attempts) {
    if (attempts > 3) {
        return 0;
    }
    return 3 - attempts;
}
";

const RETRY_TEST: &str = "\
fn test_budget() {
    assert retry_budget(1) == 2;
}

fn test_exhausted() {
    assert retry_budget(5) == 0;
}
";

const LEDGER_SRC: &str = "\
fn balance(entries) {
    return entries.credit - entries.debit;
}
";

const LEDGER_TEST: &str = "\
fn test_balance() {
    assert balance({credit: 5, debit: 2}) == 3;
}
";

const DIGIT_SRC: &str = "\
fn digit(c) {
    if (c < 0 {
        return null;
    }
    return c;
}
";

const DIGIT_TEST: &str = "\
fn test_digit() {
    assert digit(4) == 4;
}
";

const CLAMP_SRC: &str = "\
fn clamp(v, hi) {
    if (v > hi) {
        return hi;
    }
    return v;
}
";

/// Builds the eight-build feed under `root`:
///
/// | build | project        | what happens                                  |
/// |-------|----------------|-----------------------------------------------|
/// | b1    | acme/checkout  | null dereference, reproduced, guard patch     |
/// | b2    | acme/pricing   | pull request, wrong condition, reproduced      |
/// | b3    | acme/mathutil  | wrong arithmetic, reproduced, no patch         |
/// | b4    | acme/retry     | flaky on CI, passes locally                    |
/// | b5    | acme/ledger    | commit deleted by a force push                 |
/// | b6    | acme/digits    | syntax error, no test summary in the log       |
/// | b7    | acme/ghost     | errored CI job, repository gone                |
/// | b8    | acme/clamp     | no tests at all, harness dies                  |
pub fn standard_feed(root: &Path) -> Result<FixtureFeed, FixtureError> {
    fs::create_dir_all(root)?;
    let mut a = Authoring { root, manifest: FeedManifest::default(), expectations: Vec::new(), catalog: Vec::new() };
    let t = |minutes: i64| BASE_TIME + minutes * 60;
    let history = BASE_TIME - 7 * 86_400;

    // b1: push introducing a null dereference.
    a.add_project(project("acme/checkout", 120));
    let r = a.repo("checkout")?;
    r.write("README.md", "# checkout\n")?;
    r.commit("Initial import", history)?;
    r.write_project(
        &minibuild_manifest(&["src/order.ml", "src/order_test.ml"]),
        &[("src/order.ml", ORDER_SRC), ("src/order_test.ml", ORDER_TEST)],
    )?;
    let c1 = r.commit("Support orders without coupons", t(-30))?;
    let b = a.add_build(
        "b1",
        "acme/checkout",
        "checkout",
        &c1,
        t(30),
        CiStatus::Failed,
        &failing_log(2, 0, 1),
        (Outcome::Reproduced, true, Some("npe-guard")),
    )?;
    b.ci_failing_tests = Some(1);

    // b2: pull request whose new test exposes an off-by-one condition.
    a.add_project(project("acme/pricing", 80));
    let r = a.repo("pricing")?;
    r.write_project(
        &minibuild_manifest(&["src/pricing.ml", "src/pricing_test.ml", "src/boundary_test.ml"]),
        &[("src/pricing.ml", PRICING_SRC), ("src/pricing_test.ml", PRICING_TEST), ("src/boundary_test.ml", "")],
    )?;
    let fork = r.commit("Volume discounts", history)?;
    r.write("README.md", "# pricing\n\nDiscounts for bulk orders.\n")?;
    let base = r.commit("Document discounts", t(-120))?;
    r.git(&["checkout", "-q", "-b", "boundary", &fork])?;
    r.write("src/boundary_test.ml", PRICING_BOUNDARY_TEST)?;
    let head = r.commit("Test the ten-item boundary", t(-60))?;
    r.git(&["checkout", "-q", "master"])?;
    let merge_tree = ci_merge_tree(&r.path, &base, &head, t(60))?;
    let b = a.add_build(
        "b2",
        "acme/pricing",
        "pricing",
        &head,
        t(60),
        CiStatus::Failed,
        &failing_log(3, 1, 0),
        (Outcome::Reproduced, true, Some("condition-synth")),
    )?;
    b.trigger = Trigger::PullRequest;
    b.pr_base_commit = Some(base);
    b.pr_head_commit = Some(head);
    b.merge_tree = Some(merge_tree);

    // b3: a bug neither tool can express.
    a.add_project(project("acme/mathutil", 45));
    let r = a.repo("mathutil")?;
    r.write_project(
        &minibuild_manifest(&["src/math.ml", "src/math_test.ml"]),
        &[("src/math.ml", MATH_SRC), ("src/math_test.ml", MATH_TEST)],
    )?;
    let c3 = r.commit("Add addition", t(0))?;
    a.add_build(
        "b3",
        "acme/mathutil",
        "mathutil",
        &c3,
        t(90),
        CiStatus::Failed,
        &failing_log(2, 1, 0),
        (Outcome::Reproduced, true, None),
    )?;

    // b4: failed on CI for timing reasons, passes locally.
    a.add_project(project("acme/retry", 30));
    let r = a.repo("retry")?;
    r.write_project(
        &minibuild_manifest(&["src/retry.ml", "src/retry_test.ml"]),
        &[("src/retry.ml", RETRY_SRC), ("src/retry_test.ml", RETRY_TEST)],
    )?;
    let c4 = r.commit("Retry budget", t(10))?;
    a.add_build(
        "b4",
        "acme/retry",
        "retry",
        &c4,
        t(120),
        CiStatus::Failed,
        &format!("[WARN] test_exhausted took 30012 ms (limit 30000 ms)\n{}", failing_log(2, 0, 1)),
        (Outcome::NotReproduced, true, None),
    )?;

    // b5: the built commit was amended away and garbage collected.
    a.add_project(project("acme/ledger", 60));
    let r = a.repo("ledger")?;
    r.write_project(
        &minibuild_manifest(&["src/ledger.ml", "src/ledger_test.ml"]),
        &[("src/ledger.ml", LEDGER_SRC), ("src/ledger_test.ml", "fn test_balance() {\n    assert balance({credit: 5, debit: 2}) == 4;\n}\n")],
    )?;
    let lost = r.commit("Balance", t(20))?;
    r.write("src/ledger_test.ml", LEDGER_TEST)?;
    let date = format!("@{} +0000", t(40));
    vcs::git_env(&r.path, &["commit", "-q", "-a", "--amend", "-m", "Balance"], &[("GIT_COMMITTER_DATE", &date)])?;
    r.git(&["reflog", "expire", "--expire=now", "--all"])?;
    r.git(&["gc", "-q", "--prune=now"])?;
    if vcs::commit_exists(&r.path, &lost) {
        return Err(FixtureError::Broken("amended commit survived gc".into()));
    }
    a.add_build(
        "b5",
        "acme/ledger",
        "ledger",
        &lost,
        t(150),
        CiStatus::Failed,
        &failing_log(1, 1, 0),
        (Outcome::CheckoutError, true, None),
    )?;

    // b6: does not compile; the log has no test summary.
    a.add_project(project("acme/digits", 25));
    let r = a.repo("digits")?;
    r.write_project(
        &minibuild_manifest(&["src/digit.ml", "src/digit_test.ml"]),
        &[("src/digit.ml", DIGIT_SRC), ("src/digit_test.ml", DIGIT_TEST)],
    )?;
    let c6 = r.commit("Digits", t(30))?;
    a.add_build(
        "b6",
        "acme/digits",
        "digits",
        &c6,
        t(180),
        CiStatus::Failed,
        "$ minibuild compile\n[ERROR] src/digit.ml:2:15: expected `)`\n[ERROR] BUILD FAILURE\n",
        (Outcome::CompileError, false, None),
    )?;

    // b7: infrastructure error, and the repository no longer exists.
    a.add_project(project("acme/ghost", 15));
    a.add_build(
        "b7",
        "acme/ghost",
        "ghost",
        "0000000000000000000000000000000000000000",
        t(210),
        CiStatus::Errored,
        "The job exceeded the maximum time limit for jobs, and has been terminated.\n",
        (Outcome::CloneError, false, None),
    )?;

    // b8: the tests file was emptied, so the harness has nothing to run.
    a.add_project(project("acme/clamp", 20));
    let r = a.repo("clamp")?;
    let mut m = minibuild_manifest(&["src/clamp.ml", "src/clamp_test.ml"]);
    m.plugins.clear();
    r.write_project(&m, &[("src/clamp.ml", CLAMP_SRC), ("src/clamp_test.ml", "// moved to the integration suite\n")])?;
    let c8 = r.commit("Clamp", t(50))?;
    a.add_build(
        "b8",
        "acme/clamp",
        "clamp",
        &c8,
        t(240),
        CiStatus::Failed,
        "$ minibuild test\n[ERROR] The forked VM terminated without properly saying goodbye.\n[ERROR] BUILD FAILURE\n",
        (Outcome::HarnessError, false, None),
    )?;

    let mut unpopular = project("someone/toy", 0);
    unpopular.ci_enabled = true;
    let mut no_ci = project("acme/legacy", 300);
    no_ci.ci_enabled = false;
    a.finish(vec![unpopular, no_ci])
}

/// Recreates the merge a CI service builds for a pull request in a scratch
/// clone and returns its tree hash.
pub fn ci_merge_tree(repo: &Path, base: &str, head: &str, finished: i64) -> Result<String, FixtureError> {
    let scratch = tempfile::tempdir()?;
    let dest = scratch.path().join("m");
    vcs::git(scratch.path(), &["clone", "-q", "--no-hardlinks", &repo.to_string_lossy(), &dest.to_string_lossy()])?;
    vcs::git(&dest, &["checkout", "-q", "--detach", base])?;
    vcs::merge_no_ff(&dest, head, &format!("@{finished} +0000"))?;
    Ok(vcs::head_tree(&dest)?)
}

const ENV_SRC: &str = "\
fn timeout_ms() {
    if (CI_SLOW_DISK != null) {
        return 100;
    }
    return 5000;
}
";

const ENV_TEST: &str = "\
fn test_timeout_is_generous() {
    assert timeout_ms() > 1000;
}
";

/// Builds covering causes the standard feed does not: a pinned toolchain
/// that is not installed (x1), a failure that depends on a CI-only
/// environment variable (x2), a multi-module project (x3) and a pull
/// request that no longer merges cleanly (x4).
pub fn extra_feed(root: &Path) -> Result<FixtureFeed, FixtureError> {
    fs::create_dir_all(root)?;
    let mut a = Authoring { root, manifest: FeedManifest::default(), expectations: Vec::new(), catalog: Vec::new() };
    let t = |minutes: i64| BASE_TIME + minutes * 60;

    a.add_project(project("acme/legacy-jdk", 50));
    let r = a.repo("legacy-jdk")?;
    let mut m = minibuild_manifest(&["src/order.ml", "src/order_test.ml"]);
    m.toolchain = "minilang-0.9".into();
    r.write_project(&m, &[("src/order.ml", ORDER_SRC), ("src/order_test.ml", ORDER_TEST)])?;
    let c = r.commit("Pin old toolchain", t(0))?;
    a.add_build("x1", "acme/legacy-jdk", "legacy-jdk", &c, t(30), CiStatus::Failed, &failing_log(2, 0, 1), (Outcome::CompileError, true, None))?;

    a.add_project(project("acme/envdep", 50));
    let r = a.repo("envdep")?;
    let mut m = minibuild_manifest(&["src/timeout.ml", "src/timeout_test.ml"]);
    m.env = vec!["CI_SLOW_DISK".into()];
    r.write_project(&m, &[("src/timeout.ml", ENV_SRC), ("src/timeout_test.ml", ENV_TEST)])?;
    let c = r.commit("Shorter timeouts on slow disks", t(0))?;
    a.add_build("x2", "acme/envdep", "envdep", &c, t(60), CiStatus::Failed, &failing_log(1, 1, 0), (Outcome::NotReproduced, true, None))?;

    a.add_project(project("acme/multi", 50));
    let r = a.repo("multi")?;
    let mut m = minibuild_manifest(&["core/src/order.ml", "app/src/order_test.ml"]);
    m.modules = vec!["core".into(), "app".into()];
    r.write_project(&m, &[("core/src/order.ml", ORDER_SRC), ("app/src/order_test.ml", ORDER_TEST)])?;
    let c = r.commit("Split into modules", t(0))?;
    a.add_build("x3", "acme/multi", "multi", &c, t(90), CiStatus::Failed, &failing_log(2, 0, 1), (Outcome::Reproduced, true, None))?;

    a.add_project(project("acme/conflict", 50));
    let r = a.repo("conflict")?;
    r.write_project(
        &minibuild_manifest(&["src/math.ml", "src/math_test.ml"]),
        &[("src/math.ml", MATH_SRC), ("src/math_test.ml", MATH_TEST)],
    )?;
    let fork = r.commit("Math", t(-600))?;
    r.write("src/math.ml", "fn add(a, b) {\n    return b + a;\n}\n")?;
    let base = r.commit("Commute", t(-300))?;
    r.git(&["checkout", "-q", "-b", "fix", &fork])?;
    r.write("src/math.ml", "fn add(a, b) {\n    return a + b;\n}\n")?;
    let head = r.commit("Fix addition", t(-200))?;
    r.git(&["checkout", "-q", "master"])?;
    let b = a.add_build("x4", "acme/conflict", "conflict", &head, t(120), CiStatus::Failed, &failing_log(2, 1, 0), (Outcome::CheckoutError, true, None))?;
    b.trigger = Trigger::PullRequest;
    b.pr_base_commit = Some(base);
    b.pr_head_commit = Some(head);

    a.finish(Vec::new())
}

/// A wrong-condition bug given as minilang sources.
#[derive(Debug, Clone)]
pub struct SeededBug {
    pub name: &'static str,
    pub sources: Vec<(String, String)>,
}

fn seeded(name: &'static str, src: &str, tests: &str) -> SeededBug {
    SeededBug {
        name,
        sources: vec![("src/lib.ml".to_string(), src.to_string()), ("src/lib_test.ml".to_string(), tests.to_string())],
    }
}

/// Five small programs, each with one wrong or missing condition.
pub fn seeded_condition_bugs() -> Vec<SeededBug> {
    vec![
        seeded(
            "sign-boundary",
            "fn sign(x) {\n    let s = 1;\n    if (x < 0) {\n        s = -1;\n    }\n    return s;\n}\n",
            "fn test_negative() {\n    assert sign(-1) == -1;\n}\n\n\
             fn test_positive() {\n    assert sign(5) == 1;\n}\n\n\
             fn test_zero() {\n    assert sign(0) == -1;\n}\n",
        ),
        seeded(
            "missing-null-check",
            "fn label_size(item) {\n    let n = 0;\n    let label = item.label;\n    n = label.size;\n    return n;\n}\n",
            "fn test_labelled() {\n    assert label_size({label: {size: 4}}) == 4;\n}\n\n\
             fn test_unlabelled() {\n    assert label_size({label: null}) == 0;\n}\n",
        ),
        seeded(
            "discount-threshold",
            PRICING_SRC,
            &format!("{PRICING_TEST}\n{PRICING_BOUNDARY_TEST}"),
        ),
        seeded(
            "wrong-comparison",
            "fn max(a, b) {\n    let m = a;\n    if (b > a + 1) {\n        m = b;\n    }\n    return m;\n}\n",
            "fn test_first_larger() {\n    assert max(7, 2) == 7;\n}\n\n\
             fn test_equal() {\n    assert max(3, 3) == 3;\n}\n\n\
             fn test_second_larger() {\n    assert max(2, 9) == 9;\n}\n\n\
             fn test_adjacent() {\n    assert max(3, 4) == 4;\n}\n",
        ),
        seeded(
            "missing-guard",
            "fn withdraw(balance, amount) {\n    let result = balance;\n    result = balance - amount;\n    return result;\n}\n",
            "fn test_partial() {\n    assert withdraw(10, 3) == 7;\n}\n\n\
             fn test_everything() {\n    assert withdraw(5, 5) == 0;\n}\n\n\
             fn test_overdraft_refused() {\n    assert withdraw(2, 9) == 2;\n}\n",
        ),
    ]
}

/// Writes sources into a fresh directory laid out as a minibuild project.
pub fn write_project_dir(dir: &Path, sources: &[(String, String)]) -> Result<(), FixtureError> {
    fs::create_dir_all(dir)?;
    let names: Vec<&str> = sources.iter().map(|(n, _)| n.as_str()).collect();
    let mut m = minibuild_manifest(&names);
    m.plugins.clear();
    fs::write(dir.join(PROJECT_MANIFEST), m.to_toml())?;
    for (name, text) in sources {
        let p = dir.join(name);
        fs::create_dir_all(p.parent().unwrap())?;
        fs::write(p, text)?;
    }
    Ok(())
}

/// Map of relative path to contents for every listed source.
pub fn source_tree(sources: &[(String, String)]) -> BTreeMap<String, String> {
    sources.iter().cloned().collect()
}

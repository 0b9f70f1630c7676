//! One check per primary acceptance criterion. Each prints a PASS/FAIL line;
//! the test fails if any check fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Barrier, Mutex};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use repairbot::archive::{export_report, read_archive, taxonomy_percentages, ArchiveRecord, ReportFormat, TableKind};
use repairbot::ci::{CiBackend, FixtureCi};
use repairbot::diff::apply_to_tree;
use repairbot::fixtures::{ci_merge_tree, seeded_condition_bugs, source_tree, standard_feed};
use repairbot::minilang::{self, parse_expr, Bindings, Hooks};
use repairbot::model::{
    classify_outcome, BuildTool, Outcome, OverfittingFlag, ProjectCounters, RunStatistics, Step, StepResult, StepStatus,
    TimeWindow,
};
use repairbot::pipeline::{Bot, RunConfig};
use repairbot::repair::{
    condition_synth_repair, flag_overfitting, install, label_snapshots, suspects, Limits, Subject, TemplateSpace,
    CONDITION_SYNTH, NPE_GUARD,
};
use repairbot::reproducer::{
    Adapters, BuildToolAdapter, MinibuildAdapter, Reproducer, ReproducerConfig, Retention, StepFailure, Workspace,
};
use repairbot::vcs;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn outcome_index(o: Outcome) -> usize {
    Outcome::ALL.iter().position(|x| *x == o).unwrap()
}

/// Paper counts per bucket and the percentages it reports for them.
const PAPER_TAXONOMY: [(Outcome, u64, f64); 6] = [
    (Outcome::CompileError, 4305, 37.36),
    (Outcome::NotReproduced, 2130, 18.48),
    (Outcome::HarnessError, 1172, 10.17),
    (Outcome::CheckoutError, 334, 2.90),
    (Outcome::CloneError, 31, 0.27),
    (Outcome::Reproduced, 3551, 30.82),
];

fn statistics_oracle() -> Check {
    let start = Instant::now();
    let mut s = RunStatistics::empty("published", TimeWindow::all());
    for (o, n, _) in PAPER_TAXONOMY {
        s.outcomes[outcome_index(o)] = n;
    }
    ensure!(s.attempts() == 11523, "attempts {}", s.attempts());
    let shares = taxonomy_percentages(&s).ok_or("no attempts")?;
    for (o, _, want) in PAPER_TAXONOMY {
        let got = shares[outcome_index(o)].as_f64();
        ensure!((got - want).abs() <= 0.01 + 1e-9, "{o}: {got} vs {want}");
    }

    s.per_project.insert(
        "prestodb/presto".into(),
        ProjectCounters { builds: 1000, interesting: 1000, interesting_pr: 889, ..Default::default() },
    );
    s.per_project.insert(
        "druid-io/druid".into(),
        ProjectCounters { attempts: 579, reproduced: 359, interesting: 579, ..Default::default() },
    );
    let table1 = export_report(&s, TableKind::FailingBuilds, ReportFormat::Csv);
    let presto = table1.lines().find(|l| l.starts_with("prestodb/presto,")).ok_or("presto row missing")?;
    ensure!(pct_field(presto, 3) == Some(88.90), "table 1 row `{presto}`");
    let table2 = export_report(&s, TableKind::Reproduced, ReportFormat::Csv);
    let druid = table2.lines().find(|l| l.starts_with("druid-io/druid,")).ok_or("druid row missing")?;
    ensure!(pct_field(druid, 3) == Some(62.00), "table 2 row `{druid}`");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(format!("6 buckets, 88.90%, 62.00% in {elapsed:?}"))
}

fn pct_field(row: &str, k: usize) -> Option<f64> {
    row.split(',').nth(k)?.trim_end_matches('%').parse().ok()
}

fn end_to_end() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let feed = standard_feed(&dir.path().join("feed")).map_err(|e| e.to_string())?;
    let mut config = RunConfig::new(feed.root.to_string_lossy(), &dir.path().join("state"));
    config.catalog = Some(feed.catalog.clone());
    let bot = Bot::new(config).map_err(|e| e.to_string())?;
    let report = bot.run_once(feed.full_window()).map_err(|e| e.to_string())?;
    ensure!(report.builds.len() == 8, "{} builds", report.builds.len());

    // Builds the scanner drops are reproduced directly to check their buckets.
    let ci = Arc::new(FixtureCi::open(&feed.root).map_err(|e| e.to_string())?);
    let reproducer = Reproducer::new(ci.clone(), Adapters::standard(), ReproducerConfig::new(dir.path().join("direct")));
    let mut buckets = BTreeSet::new();
    for b in &report.builds {
        let want = feed.expectation(&b.build_id).ok_or("unexpected build")?;
        ensure!(b.interesting == want.interesting, "{} interesting={}", b.build_id, b.interesting);
        let got = match b.outcome {
            Some(o) => o,
            None => reproducer.reproduce(&ci.get_build(&b.build_id).map_err(|e| e.to_string())?).result.outcome,
        };
        ensure!(got == want.outcome, "{}: {got} instead of {}", b.build_id, want.outcome);
        buckets.insert(got);
    }
    ensure!(buckets.len() == 6, "only {} buckets covered", buckets.len());

    let patches = bot.patches(None).map_err(|e| e.to_string())?;
    let by_tool = |tool: &str| patches.iter().filter(|v| v.patch.tool_name == tool).map(|v| v.patch.build_id.clone()).collect::<BTreeSet<_>>();
    let patched: BTreeSet<String> = patches.iter().map(|v| v.patch.build_id.clone()).collect();
    ensure!(patched.len() >= 2, "patched builds {patched:?}");
    ensure!(by_tool(NPE_GUARD).contains("b1"), "no npe-guard patch for b1");
    ensure!(by_tool(CONDITION_SYNTH).contains("b2"), "no condition-synth patch for b2");
    let s = &report.stats;
    ensure!((s.interesting, s.outcomes[outcome_index(Outcome::Reproduced)], s.patched_builds) == (5, 3, 2), "{s:?}");
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("8/8 outcomes, patched {patched:?} in {elapsed:?}"))
}

/// Runs the suite of an edited program from scratch.
fn adequate(files: &[(String, String)]) -> bool {
    minilang::parse_files(files).ok().and_then(|p| minilang::run_suite(&p).ok()).is_some_and(|r| r.all_passed())
}

fn synthesis_oracle() -> Check {
    let mut lines = Vec::new();
    for bug in seeded_condition_bugs() {
        let subject = Subject::new(bug.sources.clone(), BTreeMap::new()).map_err(|e| e.to_string())?;
        let out = condition_synth_repair(&subject, &Limits::default());
        let emitted: Vec<_> = out.candidates.iter().filter(|c| c.adequate).collect();
        for c in &emitted {
            let patched = apply_to_tree(&source_tree(&bug.sources), &c.diff).map_err(|e| e.to_string())?;
            let files: Vec<(String, String)> = patched.into_iter().collect();
            ensure!(adequate(&files), "{}: emitted patch fails the suite\n{}", bug.name, c.diff);
        }

        // Brute force: every predicate of the space at every top-10 statement.
        let mut oracle_hits = 0;
        for id in suspects(&subject, 10) {
            let stmt = subject.program.stmt(id).unwrap().clone();
            let snapshots: Vec<Bindings> = match label_snapshots(&subject, &stmt) {
                Ok(l) => l.into_iter().map(|s| s.bindings).collect(),
                Err(_) => subject
                    .baseline
                    .iter()
                    .flat_map(|t| subject.run_test(&t.test, &Hooks::snapshots([id])).snapshots)
                    .map(|s| s.bindings)
                    .collect(),
            };
            let space = TemplateSpace::build(snapshots.iter().collect::<Vec<_>>());
            ensure!(space.len() <= 10_000, "{}: space of {} at {id}", bug.name, space.len());
            oracle_hits += space.iter().filter(|p| adequate(&install(&subject, &stmt, p))).count();
        }
        ensure!((oracle_hits > 0) == !emitted.is_empty(), "{}: oracle {oracle_hits}, emitted {}", bug.name, emitted.len());
        lines.push(format!("{}:{}/{}", bug.name, emitted.len(), oracle_hits));
    }
    Ok(format!("emitted/oracle {}", lines.join(" ")))
}

fn overfitting_flagger() -> Check {
    let bug = seeded_condition_bugs().into_iter().find(|b| b.name == "discount-threshold").ok_or("fixture missing")?;
    let subject = Subject::new(bug.sources, BTreeMap::new()).map_err(|e| e.to_string())?;
    let stmt = (0..subject.program.stmt_count() as u32)
        .filter_map(|id| subject.program.stmt(id))
        .find(|s| s.is_control() && subject.stmt_text(s.id).starts_with("if (qty"))
        .ok_or("no qty condition")?
        .clone();
    let snaps: Vec<Bindings> = label_snapshots(&subject, &stmt)?.into_iter().map(|s| s.bindings).collect();
    let flags = |text: &str| flag_overfitting(Some(&parse_expr(text).unwrap()), &snaps);
    ensure!(flags("qty != null").contains(&OverfittingFlag::ConstantPredicate), "constant-true not flagged");
    ensure!(flags("qty == qty").contains(&OverfittingFlag::SyntacticTautology), "v == v not flagged");
    ensure!(flags("!(qty < 10)") == BTreeSet::from([OverfittingFlag::None]), "correct patch flagged");
    Ok(format!("{} snapshots", snaps.len()))
}

/// Minibuild plus a sentinel file per workspace, checked once all
/// attempts are inside their compile step at the same time.
struct Sentinel {
    inner: MinibuildAdapter,
    barrier: Barrier,
    seen: Mutex<Vec<(String, Vec<PathBuf>, Vec<String>)>>,
}

fn sentinels(dir: &Path) -> Vec<String> {
    std::fs::read_dir(dir)
        .map(|r| r.filter_map(|e| e.ok()?.file_name().into_string().ok()).filter(|n| n.starts_with("sentinel-")).collect())
        .unwrap_or_default()
}

impl BuildToolAdapter for Sentinel {
    fn name(&self) -> &str {
        "minibuild"
    }

    fn compile(&self, ws: &mut Workspace, timeout: Duration) -> Result<(), StepFailure> {
        let dirs = vec![ws.root.clone(), ws.dependency_cache_dir.clone(), ws.source_dir.clone(), ws.reports_dir.clone()];
        let name = format!("sentinel-{}", ws.workspace_id);
        for d in &dirs {
            std::fs::write(d.join(&name), "x").unwrap();
        }
        self.barrier.wait();
        let foreign = dirs.iter().flat_map(|d| sentinels(d)).filter(|n| *n != name).collect();
        self.seen.lock().unwrap().push((ws.workspace_id.clone(), dirs.clone(), foreign));
        for d in &dirs {
            let _ = std::fs::remove_file(d.join(&name));
        }
        self.inner.compile(ws, timeout)
    }

    fn run_tests(&self, ws: &Workspace, timeout: Duration) -> Result<PathBuf, StepFailure> {
        self.inner.run_tests(ws, timeout)
    }
}

fn isolation() -> Check {
    const N: usize = 16;
    let dir = tempfile::tempdir().unwrap();
    let feed = standard_feed(&dir.path().join("feed")).map_err(|e| e.to_string())?;
    let ci = Arc::new(FixtureCi::open(&feed.root).map_err(|e| e.to_string())?);
    let adapter = Arc::new(Sentinel { inner: MinibuildAdapter::default(), barrier: Barrier::new(N), seen: Mutex::new(Vec::new()) });
    let mut adapters = Adapters::standard();
    adapters.register(BuildTool::FixtureMinibuild, adapter.clone());
    let mut config = ReproducerConfig::new(dir.path().join("work"));
    config.workers = N;
    config.retention = Retention::Always;
    let r = Reproducer::new(ci.clone(), adapters, config);
    let b1 = ci.get_build("b1").map_err(|e| e.to_string())?;
    let attempts = r.reproduce_all(&vec![b1; N]);
    ensure!(attempts.iter().all(|a| a.result.outcome == Outcome::Reproduced), "an attempt did not reproduce");

    let seen = adapter.seen.lock().unwrap();
    ensure!(seen.len() == N, "{} attempts reached compile", seen.len());
    let mut all_dirs = HashSet::new();
    for (id, dirs, foreign) in seen.iter() {
        ensure!(foreign.is_empty(), "{id} saw {foreign:?}");
        for d in dirs {
            ensure!(all_dirs.insert(d.clone()), "{} shared", d.display());
        }
    }
    let roots: Vec<&PathBuf> = seen.iter().map(|s| &s.1[0]).collect();
    for a in roots.iter() {
        for b in roots.iter() {
            ensure!(a == b || !b.starts_with(a), "{} nested in {}", b.display(), a.display());
        }
    }
    Ok(format!("{N} workspaces, {} directories, no foreign sentinel", all_dirs.len()))
}

fn merge_reconstruction() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let feed = standard_feed(&dir.path().join("feed")).map_err(|e| e.to_string())?;
    let ci = FixtureCi::open(&feed.root).map_err(|e| e.to_string())?;
    let recorded = ci.descriptor("b2").and_then(|d| d.merge_tree.clone()).ok_or("no recorded merge tree")?;
    let build = ci.get_build("b2").map_err(|e| e.to_string())?;
    let repo = ci.repo_locator(&build).map_err(|e| e.to_string())?;
    let recomputed = ci_merge_tree(
        Path::new(&repo),
        build.pr_base_commit.as_deref().unwrap(),
        build.pr_head_commit.as_deref().unwrap(),
        build.finished_at.unix(),
    )
    .map_err(|e| e.to_string())?;
    let mut config = ReproducerConfig::new(dir.path().join("work"));
    config.retention = Retention::Always;
    let a = Reproducer::new(Arc::new(ci), Adapters::standard(), config).reproduce(&build);
    let ws = a.workspace.ok_or("no workspace")?;
    let tree = vcs::head_tree(&ws.source_dir).map_err(|e| e.to_string())?;
    ensure!(tree == recorded, "checked out {tree}, recorded {recorded}");
    ensure!(recomputed == recorded, "fresh merge {recomputed}");
    Ok(format!("tree {}", &tree[..12]))
}

fn oracle_bucket(statuses: &[(Step, StepStatus)], failing: u32) -> Option<Outcome> {
    let order = [Step::Clone, Step::Checkout, Step::Compile, Step::Test, Step::Observe];
    let mut by_step = BTreeMap::new();
    for (s, st) in statuses {
        if by_step.insert(*s as usize, *st).is_some() {
            return None;
        }
    }
    if by_step.len() != order.len() {
        return None;
    }
    for (k, step) in order.iter().enumerate() {
        match by_step.get(&(*step as usize))? {
            StepStatus::Failed => {
                return Some(match k {
                    0 => Outcome::CloneError,
                    1 => Outcome::CheckoutError,
                    2 => Outcome::CompileError,
                    _ => Outcome::HarnessError,
                })
            }
            StepStatus::Skipped => return None,
            StepStatus::Succeeded => {}
        }
    }
    Some(if failing > 0 { Outcome::Reproduced } else { Outcome::NotReproduced })
}

fn taxonomy_fuzz() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a40);
    let steps = [Step::Clone, Step::Checkout, Step::Compile, Step::Test, Step::Observe];
    let statuses = [StepStatus::Succeeded, StepStatus::Failed, StepStatus::Skipped];
    let mut well_formed = 0;
    for i in 0..10_000 {
        // Half the traces follow the reproducer's shape; the rest are arbitrary.
        let trace: Vec<(Step, StepStatus)> = if i % 2 == 0 {
            let fail_at = rng.gen_range(0..=5);
            steps
                .iter()
                .enumerate()
                .map(|(k, s)| (*s, if k < fail_at { StepStatus::Succeeded } else if k == fail_at { StepStatus::Failed } else { StepStatus::Skipped }))
                .collect()
        } else {
            let len = rng.gen_range(0..=6);
            (0..len).map(|_| (steps[rng.gen_range(0..5)], statuses[rng.gen_range(0..3)])).collect()
        };
        let failing = rng.gen_range(0..3);
        let results: Vec<StepResult> = trace.iter().map(|(s, st)| StepResult { step: *s, status: *st, detail: String::new() }).collect();
        let got = classify_outcome(&results, failing).ok();
        ensure!(got == oracle_bucket(&trace, failing), "trace {trace:?} failing={failing}: {got:?}");
        well_formed += usize::from(got.is_some());
    }

    let mut worst = 0i64;
    let mut ties = 0;
    for _ in 0..10_000 {
        let mut s = RunStatistics::empty("fuzz", TimeWindow::all());
        let scale = [10u64, 1_000, 100_000][rng.gen_range(0..3)];
        for n in s.outcomes.iter_mut() {
            *n = rng.gen_range(0..scale);
        }
        let Some(p) = taxonomy_percentages(&s) else { continue };
        let total: i64 = p.iter().map(|x| x.0 as i64).sum();
        let d = s.attempts() as u128;
        if s.outcomes.iter().all(|&n| (n as u128 * 20_000) % (2 * d) == d) {
            ties += 1;
            continue;
        }
        worst = worst.max((total - 10_000).abs());
    }
    ensure!(worst <= 2, "sum off by {worst} hundredths");
    Ok(format!("{well_formed} well-formed of 10^4 traces; max percentage drift {:.2}; {ties} six-way ties", worst as f64 / 100.0))
}

fn queue_ids(archive: &Path) -> Result<Vec<String>, String> {
    let records = read_archive(archive).map_err(|e| e.to_string())?;
    Ok(repairbot::pipeline::patch_views(&records).into_iter().map(|v| v.patch.patch_id).collect())
}

fn crash_safety() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture(dir.path());
    let reference_dir = dir.path().join("reference");
    let start = Instant::now();
    ok(run_cmd(&reference_dir, &feed));
    let full = start.elapsed();
    let mut reference = queue_ids(&reference_dir.join("archive.jsonl"))?;
    reference.sort();

    let mut rng = ChaCha8Rng::seed_from_u64(0xdead);
    let mut interrupted = 0;
    for i in 0..10 {
        let state = dir.path().join(format!("kill-{i}"));
        let delay = full.mul_f64(rng.gen_range(0.0..1.0));
        let mut child = run_cmd(&state, &feed).stdout(std::process::Stdio::null()).spawn().unwrap();
        std::thread::sleep(delay);
        if child.try_wait().unwrap().is_none() {
            interrupted += 1;
        }
        child.kill().unwrap_or(());
        child.wait().unwrap();

        let archive = state.join("archive.jsonl");
        let text = std::fs::read(&archive).unwrap_or_default();
        let mut complete = text.split(|b| *b == b'\n').collect::<Vec<_>>();
        complete.pop();
        for (n, line) in complete.iter().enumerate() {
            serde_json::from_slice::<ArchiveRecord>(line).map_err(|e| format!("kill {i}: line {} does not parse: {e}", n + 1))?;
        }

        ok(run_cmd(&state, &feed));
        let ids = queue_ids(&archive)?;
        let distinct: BTreeSet<&String> = ids.iter().collect();
        ensure!(distinct.len() == ids.len(), "kill {i}: duplicate queue entries");
        let mut sorted = ids.clone();
        sorted.sort();
        ensure!(sorted == reference, "kill {i} after {delay:?}: queue differs from an uninterrupted run");
        let notes = std::fs::read_dir(state.join("notifications")).map(|d| d.count()).unwrap_or(0);
        ensure!(notes == ids.len(), "kill {i}: {notes} notifications for {} patches", ids.len());
    }
    Ok(format!("10 kills within {full:?} ({interrupted} mid-run), queue of {} intact", reference.len()))
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Check); 8] = [
        ("statistics oracle", statistics_oracle),
        ("end-to-end fixture run", end_to_end),
        ("synthesis oracle equivalence", synthesis_oracle),
        ("overfitting flagger", overfitting_flagger),
        ("workspace isolation x16", isolation),
        ("merge reconstruction", merge_reconstruction),
        ("taxonomy totality fuzz", taxonomy_fuzz),
        ("crash safety", crash_safety),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        // Written past the test harness capture so the summary always shows.
        let line = match &result {
            Ok(detail) => format!("PASS  {name}: {detail}\n"),
            Err(why) => format!("FAIL  {name}: {why}\n"),
        };
        std::io::stdout().write_all(line.as_bytes()).unwrap();
        if result.is_err() {
            failed.push(name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}

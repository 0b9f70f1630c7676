use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{BuildRecord, CiStatus, Outcome, RunStatistics, TimeWindow, Trigger};

use super::{ArchiveRecord, Payload};

/// A percentage in hundredths of a percent, so `Percent(3736)` is 37.36%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Percent(pub u64);

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl Percent {
    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

/// `count / total` as a percentage rounded half-up to two decimals, in
/// exact integer arithmetic. `None` when `total` is zero.
pub fn percent(count: u64, total: u64) -> Option<Percent> {
    if total == 0 {
        return None;
    }
    let scaled = count as u128 * 20_000 + total as u128;
    Some(Percent((scaled / (2 * total as u128)) as u64))
}

/// Share of each outcome among all attempts, indexed like [`Outcome::ALL`].
pub fn taxonomy_percentages(stats: &RunStatistics) -> Option<[Percent; 6]> {
    let total = stats.attempts();
    let mut out = [Percent(0); 6];
    for (i, n) in stats.outcomes.iter().enumerate() {
        out[i] = percent(*n, total)?;
    }
    Some(out)
}

/// Statistics over every build whose `finished_at` falls in `window`.
/// Repeated records for one build (a rerun) count once, latest wins;
/// a patch counts once per patch id.
pub fn compute_statistics(records: &[ArchiveRecord], window: TimeWindow, run_id: &str) -> RunStatistics {
    let mut builds: BTreeMap<&str, (&BuildRecord, bool)> = BTreeMap::new();
    let mut attempts: BTreeMap<&str, &crate::model::ReproductionResult> = BTreeMap::new();
    for r in records {
        match &r.payload {
            Payload::Build(b) if window.contains(b.build.finished_at) => {
                builds.insert(&b.build.build_id, (&b.build, b.interesting));
            }
            Payload::Reproduction(e) if window.contains(e.result.build.finished_at) => {
                attempts.insert(&e.result.build.build_id, &e.result);
            }
            _ => {}
        }
    }
    let project_of = |id: &str| -> Option<String> {
        builds
            .get(id)
            .map(|(b, _)| b.project.slug.clone())
            .or_else(|| attempts.get(id).map(|a| a.build.project.slug.clone()))
    };
    let mut patches: BTreeMap<&str, (&str, &str)> = BTreeMap::new();
    for r in records {
        if let Payload::Patch(p) = &r.payload {
            let in_window = builds.contains_key(p.patch.build_id.as_str()) || attempts.contains_key(p.patch.build_id.as_str());
            if p.patch.adequate && in_window {
                patches.insert(&p.patch.patch_id, (&p.patch.build_id, &p.patch.tool_name));
            }
        }
    }

    let mut stats = RunStatistics::empty(run_id, window);
    for (b, interesting) in builds.values() {
        let c = stats.per_project.entry(b.project.slug.clone()).or_default();
        c.builds += 1;
        stats.builds_collected += 1;
        if b.ci_status == CiStatus::Failed {
            stats.ci_failing += 1;
        }
        if *interesting {
            stats.interesting += 1;
            c.interesting += 1;
            if b.trigger == Trigger::PullRequest {
                c.interesting_pr += 1;
            }
        }
    }
    for a in attempts.values() {
        stats.outcomes[a.outcome.index()] += 1;
        let c = stats.per_project.entry(a.build.project.slug.clone()).or_default();
        c.attempts += 1;
        if a.outcome == Outcome::Reproduced {
            c.reproduced += 1;
            for s in &a.signatures {
                *stats.per_signature.entry(s.exception_type.clone()).or_default() += 1;
            }
        }
    }
    let mut patched: BTreeSet<&str> = BTreeSet::new();
    for (build_id, tool) in patches.values() {
        stats.patches_found += 1;
        let Some(slug) = project_of(build_id) else { continue };
        let c = stats.per_project.entry(slug).or_default();
        *c.patches_by_tool.entry(tool.to_string()).or_default() += 1;
        if patched.insert(build_id) {
            c.patched_builds += 1;
        }
    }
    stats.patched_builds = patched.len() as u64;
    stats
}

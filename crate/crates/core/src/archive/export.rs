use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::RunStatistics;

use super::stats::percent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    /// JSON document with a title, column names and rows.
    Doc,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "doc" | "json" => Ok(ReportFormat::Doc),
            other => Err(format!("unknown report format `{other}` (expected csv or doc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    /// Builds with failing tests per project, and the pull-request share.
    FailingBuilds,
    /// Reproduction rate per project.
    Reproduced,
    /// Builds with adequate patches, and patch counts per tool.
    Patches,
    /// Failure types by frequency.
    FailureTypes,
}

impl TableKind {
    pub const ALL: [TableKind; 4] =
        [TableKind::FailingBuilds, TableKind::Reproduced, TableKind::Patches, TableKind::FailureTypes];
}

impl FromStr for TableKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "failing-builds" | "1" => Ok(TableKind::FailingBuilds),
            "reproduced" | "2" => Ok(TableKind::Reproduced),
            "patches" | "3" => Ok(TableKind::Patches),
            "failure-types" | "4" => Ok(TableKind::FailureTypes),
            other => Err(format!("unknown table `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Rows shown before the remainder is folded into "Other".
const TOP_FAILURE_TYPES: usize = 10;

fn pct(n: u64, d: u64) -> String {
    percent(n, d).map_or_else(|| "-".to_string(), |p| format!("{p}%"))
}

fn strings<const N: usize>(v: [&str; N]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn build_table(stats: &RunStatistics, kind: TableKind) -> Table {
    let projects = &stats.per_project;
    match kind {
        TableKind::FailingBuilds => {
            let mut rows: Vec<_> = projects.iter().filter(|(_, c)| c.interesting > 0).collect();
            rows.sort_by(|a, b| b.1.interesting.cmp(&a.1.interesting).then(a.0.cmp(b.0)));
            let mut out: Vec<Vec<String>> = rows
                .iter()
                .map(|(p, c)| vec![p.to_string(), c.interesting.to_string(), c.interesting_pr.to_string(), pct(c.interesting_pr, c.interesting)])
                .collect();
            if !rows.is_empty() {
                let total: u64 = rows.iter().map(|r| r.1.interesting).sum();
                let pr: u64 = rows.iter().map(|r| r.1.interesting_pr).sum();
                out.push(vec![format!("Total on {} projects", rows.len()), total.to_string(), pr.to_string(), pct(pr, total)]);
            }
            Table {
                title: "Projects with the most failing builds".into(),
                columns: strings(["Project", "Builds with test failures", "PR builds with test failures", "% of PR builds"]),
                rows: out,
            }
        }
        TableKind::Reproduced => {
            let mut rows: Vec<_> = projects.iter().filter(|(_, c)| c.attempts > 0).collect();
            rows.sort_by(|a, b| b.1.reproduced.cmp(&a.1.reproduced).then(a.0.cmp(b.0)));
            let mut out: Vec<Vec<String>> = rows
                .iter()
                .map(|(p, c)| vec![p.to_string(), c.attempts.to_string(), c.reproduced.to_string(), pct(c.reproduced, c.attempts)])
                .collect();
            if !rows.is_empty() {
                let total: u64 = rows.iter().map(|r| r.1.attempts).sum();
                let rep: u64 = rows.iter().map(|r| r.1.reproduced).sum();
                out.push(vec![format!("Total on {} projects", rows.len()), total.to_string(), rep.to_string(), pct(rep, total)]);
            }
            Table {
                title: "Projects with the most reproduced failures".into(),
                columns: strings(["Project", "Builds with test failure", "Reproduced bugs", "% reproduced"]),
                rows: out,
            }
        }
        TableKind::Patches => {
            let tools: Vec<String> = projects
                .values()
                .flat_map(|c| c.patches_by_tool.keys().cloned())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            let mut rows: Vec<_> = projects.iter().filter(|(_, c)| c.patched_builds > 0).collect();
            rows.sort_by(|a, b| b.1.patched_builds.cmp(&a.1.patched_builds).then(a.0.cmp(b.0)));
            let mut out: Vec<Vec<String>> = rows
                .iter()
                .map(|(p, c)| {
                    let mut row = vec![p.to_string(), c.patched_builds.to_string()];
                    row.extend(tools.iter().map(|t| c.patches_by_tool.get(t).copied().unwrap_or(0).to_string()));
                    row
                })
                .collect();
            if !rows.is_empty() {
                let mut total = vec!["Total".to_string(), rows.iter().map(|r| r.1.patched_builds).sum::<u64>().to_string()];
                total.extend(tools.iter().map(|t| {
                    rows.iter().map(|r| r.1.patches_by_tool.get(t).copied().unwrap_or(0)).sum::<u64>().to_string()
                }));
                out.push(total);
            }
            let mut columns = strings(["Project", "Builds with patches"]);
            columns.extend(tools.iter().map(|t| format!("{t} patches")));
            Table { title: "Builds with at least one test-suite adequate patch".into(), columns, rows: out }
        }
        TableKind::FailureTypes => {
            let mut rows: Vec<(&String, &u64)> = stats.per_signature.iter().collect();
            rows.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
            let total: u64 = rows.iter().map(|r| *r.1).sum();
            let top = &rows[..rows.len().min(TOP_FAILURE_TYPES)];
            let subtotal: u64 = top.iter().map(|r| *r.1).sum();
            let mut out: Vec<Vec<String>> = top.iter().map(|(t, n)| vec![t.to_string(), n.to_string()]).collect();
            if !rows.is_empty() {
                out.push(vec!["Subtotal".into(), subtotal.to_string()]);
                out.push(vec!["Other".into(), (total - subtotal).to_string()]);
                out.push(vec!["Total".into(), total.to_string()]);
            }
            Table {
                title: "Most common test failure types".into(),
                columns: strings(["Exception", "Occurrences"]),
                rows: out,
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn export_report(stats: &RunStatistics, kind: TableKind, format: ReportFormat) -> String {
    let table = build_table(stats, kind);
    match format {
        ReportFormat::Csv => {
            let mut out = String::new();
            for row in std::iter::once(&table.columns).chain(&table.rows) {
                out.push_str(&row.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
            out
        }
        ReportFormat::Doc => serde_json::to_string_pretty(&table).expect("table serializes"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ProjectCounters, TimeWindow};

    fn stats() -> RunStatistics {
        let mut s = RunStatistics::empty("r", TimeWindow::all());
        let mut add = |slug: &str, attempts, reproduced| {
            s.per_project.insert(
                slug.into(),
                ProjectCounters { attempts, reproduced, interesting: attempts, ..Default::default() },
            );
        };
        add("a/low", 10, 1);
        add("a/high", 579, 359);
        add("a/mid", 20, 10);
        s
    }

    #[test]
    fn reproduced_table_sorted_by_count() {
        let csv = export_report(&stats(), TableKind::Reproduced, ReportFormat::Csv);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "Project,Builds with test failure,Reproduced bugs,% reproduced");
        assert_eq!(lines[1], "a/high,579,359,62.00%");
        assert_eq!(lines[2], "a/mid,20,10,50.00%");
        assert_eq!(lines[3], "a/low,10,1,10.00%");
        assert_eq!(lines[4], "Total on 3 projects,609,370,60.76%");
    }

    #[test]
    fn empty_statistics_give_headers_only() {
        let empty = RunStatistics::empty("r", TimeWindow::all());
        for kind in TableKind::ALL {
            let csv = export_report(&empty, kind, ReportFormat::Csv);
            assert_eq!(csv.lines().count(), 1, "{kind:?}");
            let doc: Table = serde_json::from_str(&export_report(&empty, kind, ReportFormat::Doc)).unwrap();
            assert!(doc.rows.is_empty());
        }
    }

    #[test]
    fn failure_types_fold_the_tail() {
        let mut s = RunStatistics::empty("r", TimeWindow::all());
        for i in 0..12u64 {
            s.per_signature.insert(format!("E{i:02}"), 100 - i);
        }
        let t = build_table(&s, TableKind::FailureTypes);
        assert_eq!(t.rows.len(), 13);
        assert_eq!(t.rows[0], vec!["E00", "100"]);
        assert_eq!(t.rows[10], vec!["Subtotal", "955"]);
        assert_eq!(t.rows[11], vec!["Other", "179"]);
        assert_eq!(t.rows[12], vec!["Total", "1134"]);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("csv".parse::<ReportFormat>(), Ok(ReportFormat::Csv));
        assert!("xml".parse::<ReportFormat>().is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"x\""), "\"say \"\"x\"\"\"");
    }
}

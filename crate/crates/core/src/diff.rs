//! Unified diffs: creation from two texts and strict application.
//!
//! Output follows the `git diff` layout (`--- a/<path>` / `+++ b/<path>`,
//! three lines of context, `\ No newline at end of file` markers) so that
//! patches can also be applied with `git apply`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

const CONTEXT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiffError {
    #[error("malformed diff: {0}")]
    Malformed(String),
    #[error("patch does not apply to {path}: {reason}")]
    Conflict { path: String, reason: String },
    #[error("patch touches unknown file {0}")]
    UnknownFile(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Line {
    Context(String),
    Remove(String),
    Add(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Hunk {
    old_start: usize,
    old_len: usize,
    lines: Vec<Line>,
    old_missing_newline: bool,
    new_missing_newline: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilePatch {
    pub path: String,
    hunks: Vec<Hunk>,
}

fn split_lines(text: &str) -> (Vec<&str>, bool) {
    if text.is_empty() {
        return (Vec::new(), true);
    }
    let terminated = text.ends_with('\n');
    let body = text.strip_suffix('\n').unwrap_or(text);
    (body.split('\n').collect(), terminated)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Op {
    Keep(usize, usize),
    Del(usize),
    Ins(usize),
}

fn edit_script<T: PartialEq>(a: &[T], b: &[T]) -> Vec<Op> {
    // Longest-common-subsequence table over the trimmed middle section.
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let suffix = a[prefix..]
        .iter()
        .rev()
        .zip(b[prefix..].iter().rev())
        .take_while(|(x, y)| x == y)
        .count();
    let (am, bm) = (&a[prefix..a.len() - suffix], &b[prefix..b.len() - suffix]);
    let (n, m) = (am.len(), bm.len());
    let mut table = vec![0u32; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            table[idx(i, j)] = if am[i] == bm[j] {
                table[idx(i + 1, j + 1)] + 1
            } else {
                table[idx(i + 1, j)].max(table[idx(i, j + 1)])
            };
        }
    }
    let mut ops: Vec<Op> = (0..prefix).map(|k| Op::Keep(k, k)).collect();
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && am[i] == bm[j] {
            ops.push(Op::Keep(prefix + i, prefix + j));
            i += 1;
            j += 1;
        } else if i < n && (j == m || table[idx(i + 1, j)] >= table[idx(i, j + 1)]) {
            ops.push(Op::Del(prefix + i));
            i += 1;
        } else {
            ops.push(Op::Ins(prefix + j));
            j += 1;
        }
    }
    for k in 0..suffix {
        ops.push(Op::Keep(a.len() - suffix + k, b.len() - suffix + k));
    }
    ops
}

/// Unified diff turning `old` into `new` for `path`; empty when identical.
pub fn create_patch(path: &str, old: &str, new: &str) -> String {
    if old == new {
        return String::new();
    }
    let (a, a_term) = split_lines(old);
    let (b, b_term) = split_lines(new);
    // An unterminated last line never equals a terminated one.
    let tag = |lines: &[&str], term: bool| -> Vec<(String, bool)> {
        let last = lines.len().wrapping_sub(1);
        lines.iter().enumerate().map(|(k, l)| (l.to_string(), k == last && !term)).collect()
    };
    let ops = edit_script(&tag(&a, a_term), &tag(&b, b_term));

    let changed: Vec<usize> = ops
        .iter()
        .enumerate()
        .filter(|(_, op)| !matches!(op, Op::Keep(..)))
        .map(|(k, _)| k)
        .collect();
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for &k in &changed {
        let lo = k.saturating_sub(CONTEXT);
        let hi = (k + CONTEXT + 1).min(ops.len());
        match groups.last_mut() {
            Some(g) if lo <= g.1 => g.1 = hi,
            _ => groups.push((lo, hi)),
        }
    }

    let mut out = format!("--- a/{path}\n+++ b/{path}\n");
    for (lo, hi) in groups {
        let slice = &ops[lo..hi];
        let old_first = slice.iter().find_map(|op| match op {
            Op::Keep(i, _) | Op::Del(i) => Some(*i),
            Op::Ins(_) => None,
        });
        let new_first = slice.iter().find_map(|op| match op {
            Op::Keep(_, j) | Op::Ins(j) => Some(*j),
            Op::Del(_) => None,
        });
        let old_len = slice.iter().filter(|op| !matches!(op, Op::Ins(_))).count();
        let new_len = slice.iter().filter(|op| !matches!(op, Op::Del(_))).count();
        let old_start = old_first.map_or_else(|| preceding_old(&ops, lo), |i| i + 1);
        let new_start = new_first.map_or_else(|| preceding_new(&ops, lo), |j| j + 1);
        let _ = writeln!(out, "@@ -{} +{} @@", range(old_start, old_len), range(new_start, new_len));
        for op in slice {
            let (marker, text, no_newline) = match *op {
                Op::Keep(i, _) => (' ', a[i], i + 1 == a.len() && !a_term),
                Op::Del(i) => ('-', a[i], i + 1 == a.len() && !a_term),
                Op::Ins(j) => ('+', b[j], j + 1 == b.len() && !b_term),
            };
            let _ = writeln!(out, "{marker}{text}");
            if no_newline {
                out.push_str("\\ No newline at end of file\n");
            }
        }
    }
    out
}

fn preceding_old(ops: &[Op], before: usize) -> usize {
    ops[..before]
        .iter()
        .rev()
        .find_map(|op| match op {
            Op::Keep(i, _) | Op::Del(i) => Some(*i + 1),
            Op::Ins(_) => None,
        })
        .unwrap_or(0)
}

fn preceding_new(ops: &[Op], before: usize) -> usize {
    ops[..before]
        .iter()
        .rev()
        .find_map(|op| match op {
            Op::Keep(_, j) | Op::Ins(j) => Some(*j + 1),
            Op::Del(_) => None,
        })
        .unwrap_or(0)
}

fn range(start: usize, len: usize) -> String {
    if len == 1 {
        start.to_string()
    } else {
        format!("{start},{len}")
    }
}

fn parse_range(text: &str) -> Result<(usize, usize), DiffError> {
    let bad = || DiffError::Malformed(format!("bad hunk range `{text}`"));
    let (start, len) = match text.split_once(',') {
        Some((s, l)) => (s.parse().map_err(|_| bad())?, l.parse().map_err(|_| bad())?),
        None => (text.parse().map_err(|_| bad())?, 1),
    };
    Ok((start, len))
}

fn strip_path(raw: &str) -> String {
    let raw = raw.split('\t').next().unwrap_or(raw).trim();
    raw.strip_prefix("a/").or_else(|| raw.strip_prefix("b/")).unwrap_or(raw).to_string()
}

/// Splits a (possibly multi-file) unified diff into per-file patches.
pub fn parse_patch(text: &str) -> Result<Vec<FilePatch>, DiffError> {
    let mut patches: Vec<FilePatch> = Vec::new();
    let lines: Vec<&str> = text.lines().collect();
    let mut k = 0;
    while k < lines.len() {
        let line = lines[k];
        if let Some(old) = line.strip_prefix("--- ") {
            let new = lines
                .get(k + 1)
                .and_then(|l| l.strip_prefix("+++ "))
                .ok_or_else(|| DiffError::Malformed("`---` header without `+++`".into()))?;
            let path = if new.trim() == "/dev/null" { strip_path(old) } else { strip_path(new) };
            patches.push(FilePatch { path, hunks: Vec::new() });
            k += 2;
            continue;
        }
        if let Some(header) = line.strip_prefix("@@ ") {
            let patch = patches
                .last_mut()
                .ok_or_else(|| DiffError::Malformed("hunk before any file header".into()))?;
            let mut parts = header.split_whitespace();
            let old = parts.next().and_then(|p| p.strip_prefix('-'));
            let new = parts.next().and_then(|p| p.strip_prefix('+'));
            let (Some(old), Some(new)) = (old, new) else {
                return Err(DiffError::Malformed(format!("bad hunk header `{line}`")));
            };
            let (old_start, old_len) = parse_range(old)?;
            let (_, new_len) = parse_range(new)?;
            let mut hunk = Hunk {
                old_start,
                old_len,
                lines: Vec::new(),
                old_missing_newline: false,
                new_missing_newline: false,
            };
            let (mut seen_old, mut seen_new) = (0, 0);
            k += 1;
            while k < lines.len() && (seen_old < old_len || seen_new < new_len || lines[k].starts_with('\\')) {
                let l = lines[k];
                let last = hunk.lines.last().cloned();
                match l.chars().next() {
                    Some(' ') => {
                        hunk.lines.push(Line::Context(l[1..].to_string()));
                        seen_old += 1;
                        seen_new += 1;
                    }
                    None => {
                        hunk.lines.push(Line::Context(String::new()));
                        seen_old += 1;
                        seen_new += 1;
                    }
                    Some('-') => {
                        hunk.lines.push(Line::Remove(l[1..].to_string()));
                        seen_old += 1;
                    }
                    Some('+') => {
                        hunk.lines.push(Line::Add(l[1..].to_string()));
                        seen_new += 1;
                    }
                    Some('\\') => match last {
                        Some(Line::Remove(_)) => hunk.old_missing_newline = true,
                        Some(Line::Add(_)) => hunk.new_missing_newline = true,
                        Some(Line::Context(_)) => {
                            hunk.old_missing_newline = true;
                            hunk.new_missing_newline = true;
                        }
                        None => return Err(DiffError::Malformed("stray no-newline marker".into())),
                    },
                    Some(_) => return Err(DiffError::Malformed(format!("unexpected hunk line `{l}`"))),
                }
                k += 1;
            }
            if seen_old != old_len || seen_new != new_len {
                return Err(DiffError::Malformed(format!("hunk `{line}` is truncated")));
            }
            patch.hunks.push(hunk);
            continue;
        }
        // Preamble such as `diff --git` or `index` lines.
        k += 1;
    }
    if patches.is_empty() {
        return Err(DiffError::Malformed("no file headers".into()));
    }
    Ok(patches)
}

impl FilePatch {
    /// Applies the hunks at their stated positions; any context mismatch is
    /// a conflict.
    pub fn apply(&self, original: &str) -> Result<String, DiffError> {
        let (src, mut terminated) = split_lines(original);
        let conflict = |reason: String| DiffError::Conflict { path: self.path.clone(), reason };
        let mut out: Vec<String> = Vec::new();
        let mut cursor = 0usize;
        for hunk in &self.hunks {
            let start = if hunk.old_len == 0 { hunk.old_start } else { hunk.old_start.saturating_sub(1) };
            if start < cursor || start > src.len() {
                return Err(conflict(format!("hunk at line {} is out of range", hunk.old_start)));
            }
            out.extend(src[cursor..start].iter().map(|s| s.to_string()));
            let mut pos = start;
            for line in &hunk.lines {
                match line {
                    Line::Context(text) | Line::Remove(text) => {
                        if src.get(pos) != Some(&text.as_str()) {
                            return Err(conflict(format!("line {} does not match `{text}`", pos + 1)));
                        }
                        if let Line::Context(_) = line {
                            out.push(text.clone());
                        }
                        pos += 1;
                    }
                    Line::Add(text) => out.push(text.clone()),
                }
            }
            if pos == src.len() {
                if hunk.old_missing_newline == terminated && !src.is_empty() && hunk.old_len > 0 {
                    return Err(conflict("trailing newline state differs".into()));
                }
                terminated = !hunk.new_missing_newline;
            }
            cursor = pos;
        }
        out.extend(src[cursor..].iter().map(|s| s.to_string()));
        let mut text = out.join("\n");
        if terminated && !out.is_empty() {
            text.push('\n');
        }
        Ok(text)
    }
}

/// Applies a multi-file diff to an in-memory tree keyed by relative path.
pub fn apply_to_tree(tree: &BTreeMap<String, String>, diff: &str) -> Result<BTreeMap<String, String>, DiffError> {
    let mut out = tree.clone();
    for patch in parse_patch(diff)? {
        let original = out.get(&patch.path).ok_or_else(|| DiffError::UnknownFile(patch.path.clone()))?;
        let updated = patch.apply(original)?;
        out.insert(patch.path.clone(), updated);
    }
    Ok(out)
}

/// Concatenated per-file diffs between two trees with the same key set.
pub fn diff_trees(before: &BTreeMap<String, String>, after: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (path, new) in after {
        let old = before.get(path).map(String::as_str).unwrap_or("");
        out.push_str(&create_patch(path, old, new));
    }
    out
}

/// Added plus removed lines, a rough size measure for ordering patches.
pub fn changed_line_count(diff: &str) -> usize {
    diff.lines()
        .filter(|l| (l.starts_with('+') && !l.starts_with("+++")) || (l.starts_with('-') && !l.starts_with("---")))
        .count()
}

//! Condition synthesis: find a statement where a forced branch (or a
//! skipped statement) makes the failing tests pass, then search a small
//! predicate language for a condition reproducing those forced decisions.

use std::collections::{BTreeSet, HashSet};

use crate::minilang::{
    eval_with_bindings, expr_to_string, BinOp, Bindings, Expr, Forcing, Hooks, Stmt, StmtId, StmtKind, Value,
};
use crate::model::OverfittingFlag;

use super::ochiai::ochiai;
use super::subject::Subject;
use super::{Candidate, Limits};

/// Bindings seen at a statement, with the decision the execution needs there:
/// branch taken for conditions, executed-or-not for other statements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSnapshot {
    pub test: String,
    pub bindings: Bindings,
    pub label: bool,
}

/// Spaces larger than this are not searched exhaustively.
pub const MAX_SPACE: usize = 10_000;

/// Predicates over the variables visible at one statement, in canonical
/// order: atoms, then negated atoms, then `&&`/`||` of two atoms.
#[derive(Debug, Clone)]
pub struct TemplateSpace {
    pub atoms: Vec<Expr>,
}

impl TemplateSpace {
    pub fn build<'a>(snapshots: impl IntoIterator<Item = &'a Bindings> + Clone) -> Self {
        let mut vars: Vec<String> = Vec::new();
        let mut ints: BTreeSet<i64> = [-1, 0, 1].into();
        let mut bools: BTreeSet<bool> = BTreeSet::new();
        for b in snapshots.clone() {
            for (name, v) in b {
                if !vars.contains(name) {
                    vars.push(name.clone());
                }
                match v {
                    Value::Int(i) => {
                        ints.insert(*i);
                    }
                    Value::Bool(x) => {
                        bools.insert(*x);
                    }
                    _ => {}
                }
            }
        }
        let seen = |var: &str, pred: fn(&Value) -> bool| {
            snapshots
                .clone()
                .into_iter()
                .any(|b| b.iter().any(|(n, v)| n == var && pred(v)))
        };
        let is_int = |v: &Value| matches!(v, Value::Int(_));
        let is_bool = |v: &Value| matches!(v, Value::Bool(_));

        let mut atoms = Vec::new();
        for v in &vars {
            let var = Expr::var(v);
            atoms.push(Expr::binary(BinOp::Eq, var.clone(), Expr::Null));
            atoms.push(Expr::binary(BinOp::Ne, var.clone(), Expr::Null));
            // Range tests before equalities: `v == c` tends to name a test input.
            if seen(v, is_int) {
                atoms.extend(ints.iter().map(|c| Expr::binary(BinOp::Lt, var.clone(), Expr::Int(*c))));
            }
            if seen(v, is_bool) {
                atoms.extend(bools.iter().map(|c| Expr::binary(BinOp::Eq, var.clone(), Expr::Bool(*c))));
            }
            if seen(v, is_int) {
                atoms.extend(ints.iter().map(|c| Expr::binary(BinOp::Eq, var.clone(), Expr::Int(*c))));
            }
        }
        for (i, v) in vars.iter().enumerate() {
            for w in &vars[i + 1..] {
                atoms.push(Expr::binary(BinOp::Eq, Expr::var(v), Expr::var(w)));
            }
        }
        for v in &vars {
            for w in &vars {
                if v != w && seen(v, is_int) && seen(w, is_int) {
                    atoms.push(Expr::binary(BinOp::Lt, Expr::var(v), Expr::var(w)));
                }
            }
        }
        atoms.push(Expr::Bool(true));
        atoms.push(Expr::Bool(false));
        TemplateSpace { atoms }
    }

    pub fn len(&self) -> usize {
        let a = self.atoms.len();
        2 * a + a * a.saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Expr> + '_ {
        let a = &self.atoms;
        let negated = a.iter().map(|x| Expr::not(x.clone()));
        let pairs = (0..a.len()).flat_map(move |i| {
            (i + 1..a.len()).flat_map(move |j| {
                [
                    Expr::binary(BinOp::And, a[i].clone(), a[j].clone()),
                    Expr::binary(BinOp::Or, a[i].clone(), a[j].clone()),
                ]
            })
        });
        a.iter().cloned().chain(negated).chain(pairs)
    }
}

/// Truth value of a predicate over recorded bindings; `None` if evaluation
/// fails or does not produce a boolean.
pub fn truth(pred: &Expr, bindings: &Bindings) -> Option<bool> {
    match eval_with_bindings(pred, bindings) {
        Ok(Value::Bool(b)) => Some(b),
        _ => None,
    }
}

pub fn consistent(pred: &Expr, snapshots: &[LabeledSnapshot]) -> bool {
    snapshots.iter().all(|s| truth(pred, &s.bindings) == Some(s.label))
}

fn tautology_kind(pred: &Expr) -> Option<bool> {
    match pred {
        Expr::Bool(b) => Some(*b),
        Expr::Unary(crate::minilang::UnOp::Not, inner) => tautology_kind(inner).map(|b| !b),
        Expr::Binary(op, l, r) if l == r => match op {
            BinOp::Eq | BinOp::Le | BinOp::Ge => Some(true),
            BinOp::Ne | BinOp::Lt | BinOp::Gt => Some(false),
            _ => None,
        },
        _ => None,
    }
}

/// Flags for a synthesized predicate: constant over every snapshot, and/or
/// syntactically always true or always false. Patches without a predicate
/// get `{none}`.
pub fn flag_overfitting(pred: Option<&Expr>, snapshots: &[Bindings]) -> BTreeSet<OverfittingFlag> {
    let mut flags = BTreeSet::new();
    if let Some(pred) = pred {
        if tautology_kind(pred).is_some() {
            flags.insert(OverfittingFlag::SyntacticTautology);
        }
        let values: Option<BTreeSet<bool>> = snapshots.iter().map(|b| truth(pred, b)).collect();
        if matches!(values, Some(v) if v.len() == 1) {
            flags.insert(OverfittingFlag::ConstantPredicate);
        }
    }
    if flags.is_empty() {
        flags.insert(OverfittingFlag::None);
    }
    flags
}

/// Whether condition synthesis may edit this statement: application code,
/// not a declaration (wrapping one would change its scope).
pub fn repairable(subject: &Subject, stmt: &Stmt) -> bool {
    !subject.in_test_function(stmt.id) && !matches!(stmt.kind, StmtKind::Let { .. })
}

/// Top-`k` repairable statements covered by at least one failing test,
/// most suspicious first.
pub fn suspects(subject: &Subject, k: usize) -> Vec<StmtId> {
    let matrix = subject.matrix();
    let Ok(ranked) = ochiai::<f64>(&matrix) else {
        return Vec::new();
    };
    ranked
        .into_iter()
        .filter(|(id, _)| matrix.spectra[*id as usize].ef > 0)
        .filter(|(id, _)| subject.program.stmt(*id).is_some_and(|s| repairable(subject, s)))
        .map(|(id, _)| id)
        .take(k)
        .collect()
}

/// Forcing that makes `test` pass at `stmt`, with the snapshots taken there.
fn angelic(subject: &Subject, stmt: &Stmt, test: &str) -> Option<(bool, Vec<Bindings>)> {
    let options: Vec<(bool, Forcing)> = if stmt.is_control() {
        vec![
            (true, Forcing::Condition { stmt: stmt.id, value: true }),
            (false, Forcing::Condition { stmt: stmt.id, value: false }),
        ]
    } else {
        vec![(false, Forcing::Skip { stmt: stmt.id })]
    };
    options.into_iter().find_map(|(label, forcing)| {
        let hooks = Hooks { snapshot_at: [stmt.id].into(), forcing: Some(forcing) };
        let trace = subject.run_test(test, &hooks);
        trace.passed().then(|| (label, trace.snapshots.into_iter().map(|s| s.bindings).collect()))
    })
}

/// Labeled snapshots at `stmt`, or why there are none.
pub fn label_snapshots(subject: &Subject, stmt: &Stmt) -> Result<Vec<LabeledSnapshot>, String> {
    let mut out = Vec::new();
    for t in subject.failing() {
        let (label, snaps) = angelic(subject, stmt, &t.test)
            .ok_or_else(|| format!("no angelic value at statement {} for {}", stmt.id, t.test))?;
        out.extend(snaps.into_iter().map(|bindings| LabeledSnapshot { test: t.test.clone(), bindings, label }));
    }
    let hooks = Hooks::snapshots([stmt.id]);
    for t in subject.passing() {
        let trace = subject.run_test(&t.test, &hooks);
        for s in trace.snapshots {
            let label = if stmt.is_control() { s.branch.unwrap_or(false) } else { true };
            out.push(LabeledSnapshot { test: t.test.clone(), bindings: s.bindings, label });
        }
    }
    if out.is_empty() {
        return Err(format!("no snapshots at statement {}", stmt.id));
    }
    Ok(out)
}

/// Sources with `pred` installed at `stmt`: the new condition of an
/// `if`/`while`, or a precondition wrapped around any other statement.
pub fn install(subject: &Subject, stmt: &Stmt, pred: &Expr) -> Vec<(String, String)> {
    let loc = &subject.program.locations[stmt.id as usize];
    let text = expr_to_string(pred);
    match (stmt.is_control(), loc.cond_span) {
        (true, Some(span)) => subject.replaced(loc.file, span, &text),
        _ => {
            let wrapped = format!("if ({text}) {{ {} }}", subject.stmt_text(stmt.id));
            subject.replaced(loc.file, loc.span, &wrapped)
        }
    }
}

pub fn describe(stmt: &Stmt, pred: &Expr) -> String {
    let text = expr_to_string(pred);
    if stmt.is_control() {
        format!("replace condition of statement {} with `{text}`", stmt.id)
    } else {
        format!("guard statement {} with `{text}`", stmt.id)
    }
}

pub struct SynthOutput {
    pub candidates: Vec<Candidate>,
    pub diagnostics: Vec<String>,
}

fn candidate(subject: &Subject, stmt: &Stmt, pred: &Expr, labeled: &[LabeledSnapshot]) -> Candidate {
    let patched = install(subject, stmt, pred);
    let validation = subject.validate_files(&patched);
    let bindings: Vec<Bindings> = labeled.iter().map(|s| s.bindings.clone()).collect();
    Candidate {
        tool: super::CONDITION_SYNTH.to_string(),
        diff: subject.diff(&patched),
        adequate: validation.adequate,
        flags: flag_overfitting(Some(pred), &bindings),
        stmt: Some(stmt.id),
        predicate: Some(expr_to_string(pred)),
        note: match validation.diagnostic {
            Some(d) => format!("{}; {d}", describe(stmt, pred)),
            None => describe(stmt, pred),
        },
    }
}

pub fn condition_synth_repair(subject: &Subject, limits: &Limits) -> SynthOutput {
    let mut out = SynthOutput { candidates: Vec::new(), diagnostics: Vec::new() };
    if subject.failing().next().is_none() || subject.passing().next().is_none() {
        out.diagnostics.push("condition synthesis needs failing and passing tests".into());
        return out;
    }
    let mut adequate = 0;
    let mut tried = 0;
    for id in suspects(subject, limits.top_k) {
        let stmt = subject.program.stmt(id).expect("suspect exists").clone();
        let labeled = match label_snapshots(subject, &stmt) {
            Ok(l) => l,
            Err(d) => {
                out.diagnostics.push(d);
                continue;
            }
        };
        let space = TemplateSpace::build(labeled.iter().map(|s| &s.bindings).collect::<Vec<_>>());
        let mut found_here = false;
        let mut validated: HashSet<Expr> = HashSet::new();
        for pred in space.iter().filter(|p| consistent(p, &labeled)) {
            if adequate >= limits.max_patches || tried >= limits.max_validations {
                break;
            }
            tried += 1;
            let c = candidate(subject, &stmt, &pred, &labeled);
            validated.insert(pred);
            if c.adequate {
                adequate += 1;
                found_here = true;
            }
            out.candidates.push(c);
        }
        // Label consistency is sufficient but not necessary: a passing test
        // may tolerate a different decision. Search by validation instead.
        if !found_here && space.len() <= MAX_SPACE && adequate < limits.max_patches {
            let rescue = space
                .iter()
                .filter(|p| !validated.contains(p))
                .find(|p| subject.validate_files(&install(subject, &stmt, p)).adequate);
            if let Some(pred) = rescue {
                adequate += 1;
                out.candidates.push(candidate(subject, &stmt, &pred, &labeled));
            }
        }
        if adequate >= limits.max_patches {
            break;
        }
    }
    if out.candidates.is_empty() && out.diagnostics.is_empty() {
        out.diagnostics.push("no consistent predicate found".into());
    }
    out
}

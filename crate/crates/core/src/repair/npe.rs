//! Null-dereference guards. For each statement where a failing test
//! dereferences null, try skipping the statement when the base is null, then
//! try giving the base a default record before the statement runs.

use std::collections::{BTreeSet, HashSet};

use crate::minilang::{eval_with_bindings, expr_to_string, Bindings, Expr, Hooks, Stmt, StmtKind, TraceOutcome, Value};
use crate::model::OverfittingFlag;

use super::subject::Subject;
use super::{Candidate, Limits, NPE_GUARD};

/// `(base, field)` pairs dereferenced by a statement's own expressions, in
/// evaluation order. Bodies of `if`/`while` are separate statements.
pub fn dereferences(stmt: &Stmt) -> Vec<(Expr, String)> {
    fn walk(e: &Expr, out: &mut Vec<(Expr, String)>) {
        match e {
            Expr::Field(base, f) => {
                walk(base, out);
                out.push(((**base).clone(), f.clone()));
            }
            Expr::Record(fields) => fields.iter().for_each(|(_, v)| walk(v, out)),
            Expr::Unary(_, x) => walk(x, out),
            Expr::Binary(_, l, r) => {
                walk(l, out);
                walk(r, out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| walk(a, out)),
            Expr::Int(_) | Expr::Bool(_) | Expr::Null | Expr::Var(_) => {}
        }
    }
    let mut out = Vec::new();
    match &stmt.kind {
        StmtKind::Let { value, .. } => walk(value, &mut out),
        StmtKind::Assign { target, value } => {
            walk(value, &mut out);
            let mut base = Expr::var(&target.var);
            for f in &target.fields {
                out.push((base.clone(), f.clone()));
                base = Expr::Field(Box::new(base), f.clone());
            }
        }
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => walk(cond, &mut out),
        StmtKind::Return(Some(e)) | StmtKind::Assert(e) | StmtKind::Expr(e) => walk(e, &mut out),
        StmtKind::Return(None) => {}
    }
    out
}

/// The first dereferenced base that is null under `bindings`.
pub fn null_base(stmt: &Stmt, bindings: &Bindings) -> Option<(Expr, String)> {
    dereferences(stmt)
        .into_iter()
        .filter(|(base, _)| base.as_path().is_some())
        .find(|(base, _)| matches!(eval_with_bindings(base, bindings), Ok(Value::Null)))
}

/// Default for `base.field`, shaped like the values passing tests saw there.
fn default_field(subject: &Subject, stmt: &Stmt, base: &Expr, field: &str) -> Value {
    let access = Expr::Field(Box::new(base.clone()), field.to_string());
    let hooks = Hooks::snapshots([stmt.id]);
    for t in subject.passing() {
        for s in subject.run_test(&t.test, &hooks).snapshots {
            if let Ok(v) = eval_with_bindings(&access, &s.bindings) {
                if v != Value::Null {
                    return v.type_default();
                }
            }
        }
    }
    Value::Int(0)
}

pub struct NpeOutput {
    pub candidates: Vec<Candidate>,
    pub diagnostics: Vec<String>,
}

pub fn npe_guard_repair(subject: &Subject, limits: &Limits) -> NpeOutput {
    let mut out = NpeOutput { candidates: Vec::new(), diagnostics: Vec::new() };
    let mut sites = Vec::new();
    let mut seen = HashSet::new();
    for t in subject.failing().filter(|t| t.outcome == TraceOutcome::NullDeref) {
        if let Some(id) = t.error_stmt {
            if seen.insert(id) {
                sites.push((id, t.test.clone()));
            }
        }
    }
    if sites.is_empty() {
        out.diagnostics.push("no failing test dereferences null".into());
        return out;
    }
    let none: BTreeSet<OverfittingFlag> = [OverfittingFlag::None].into();
    // Emitted per strategy: skip-guard, default-value.
    let mut emitted = [0usize; 2];
    for (id, test) in sites {
        let Some(stmt) = subject.program.stmt(id).cloned() else { continue };
        let trace = subject.run_test(&test, &Hooks::snapshots([id]));
        let Some(found) = trace.snapshots.last().and_then(|s| null_base(&stmt, &s.bindings)) else {
            out.diagnostics.push(format!("statement {id}: null base is not a variable path"));
            continue;
        };
        let (base, field) = found;
        let base_text = expr_to_string(&base);
        let loc = &subject.program.locations[id as usize];
        let orig = subject.stmt_text(id);

        let mut attempts = Vec::new();
        if !matches!(stmt.kind, StmtKind::Let { .. }) {
            attempts.push((
                0,
                format!("if ({base_text} != null) {{ {orig} }}"),
                format!("skip statement {id} when {base_text} is null"),
            ));
        }
        if let Some(place) = base.as_path() {
            let default = default_field(subject, &stmt, &base, &field);
            let record = expr_to_string(&Expr::Record(vec![(field.clone(), default.to_expr())]));
            attempts.push((
                1,
                format!("if ({place} == null) {{ {place} = {record}; }} {orig}"),
                format!("initialize {place} before statement {id}"),
            ));
        }
        for (strategy, replacement, note) in attempts {
            if emitted[strategy] >= limits.max_patches {
                continue;
            }
            emitted[strategy] += 1;
            let patched = subject.replaced(loc.file, loc.span, &replacement);
            let v = subject.validate_files(&patched);
            out.candidates.push(Candidate {
                tool: NPE_GUARD.to_string(),
                diff: subject.diff(&patched),
                adequate: v.adequate,
                flags: none.clone(),
                stmt: Some(id),
                predicate: None,
                note: match v.diagnostic {
                    Some(d) => format!("{note}; {d}"),
                    None => note,
                },
            });
        }
    }
    out
}

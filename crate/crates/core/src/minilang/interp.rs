use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::value::{Bindings, Value};

/// Statements (plus loop checks and calls) a single test may execute.
pub const FUEL_LIMIT: u64 = 100_000;
const MAX_CALL_DEPTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOutcome {
    Pass,
    AssertFail,
    NullDeref,
    RuntimeError,
}

/// Instrumentation requests for one execution.
#[derive(Debug, Clone, Default)]
pub struct Hooks {
    /// Record in-scope bindings whenever one of these statements is reached.
    pub snapshot_at: BTreeSet<StmtId>,
    pub forcing: Option<Forcing>,
}

impl Hooks {
    pub fn snapshots(ids: impl IntoIterator<Item = StmtId>) -> Self {
        Hooks { snapshot_at: ids.into_iter().collect(), forcing: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Forcing {
    /// Every evaluation of this `if`/`while` condition yields `value`.
    Condition { stmt: StmtId, value: bool },
    /// This statement is reached but never executed.
    Skip { stmt: StmtId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub stmt_id: StmtId,
    pub bindings: Bindings,
    /// Branch taken by an `if`/`while` at this visit (forced or evaluated).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub test: String,
    pub covered: BTreeSet<StmtId>,
    pub snapshots: Vec<Snapshot>,
    pub outcome: TraceOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_stmt: Option<StmtId>,
    /// Trace text whose first line is `<Kind>: <detail>`; empty on pass.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub failure: String,
}

impl ExecutionTrace {
    pub fn passed(&self) -> bool {
        self.outcome == TraceOutcome::Pass
    }

    /// Head token of the failure text, e.g. `NullDeref`.
    pub fn failure_kind(&self) -> Option<&str> {
        self.failure.split(':').next().filter(|k| !k.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Fault {
    pub outcome: TraceOutcome,
    pub stmt: StmtId,
    pub kind: &'static str,
    pub detail: String,
}

enum Flow {
    Normal,
    Return(Value),
}

type Scope = Vec<(String, Value)>;

pub(crate) struct Machine<'p> {
    program: Option<&'p Program>,
    hooks: &'p Hooks,
    fuel: u64,
    current: StmtId,
    frames: Vec<Vec<Scope>>,
    globals: Scope,
    pub covered: BTreeSet<StmtId>,
    pub snapshots: Vec<Snapshot>,
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program, hooks: &'p Hooks, globals: &BTreeMap<String, Value>) -> Self {
        Machine {
            program: Some(program),
            hooks,
            fuel: FUEL_LIMIT,
            current: 0,
            frames: Vec::new(),
            globals: globals.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            covered: BTreeSet::new(),
            snapshots: Vec::new(),
        }
    }

    fn line(&self) -> u32 {
        self.program.map_or(0, |p| p.line_of(self.current))
    }

    fn fault(&self, outcome: TraceOutcome, kind: &'static str, detail: String) -> Fault {
        let detail = if self.program.is_some() {
            format!("{detail} at line {}", self.line())
        } else {
            detail
        };
        Fault { outcome, stmt: self.current, kind, detail }
    }

    fn runtime(&self, kind: &'static str, detail: impl Into<String>) -> Fault {
        self.fault(TraceOutcome::RuntimeError, kind, detail.into())
    }

    fn burn(&mut self) -> Result<(), Fault> {
        if self.fuel == 0 {
            return Err(self.runtime("FuelExhausted", format!("exceeded {FUEL_LIMIT} steps")));
        }
        self.fuel -= 1;
        Ok(())
    }

    pub fn call(&mut self, name: &str, args: Vec<Value>) -> Result<Value, Fault> {
        let program = self.program.ok_or_else(|| self.runtime("UnknownFunction", format!("no function `{name}`")))?;
        let func = program
            .function(name)
            .ok_or_else(|| self.runtime("UnknownFunction", format!("no function `{name}`")))?;
        if func.params.len() != args.len() {
            return Err(self.runtime(
                "ArityMismatch",
                format!("`{name}` takes {} arguments, got {}", func.params.len(), args.len()),
            ));
        }
        if self.frames.len() >= MAX_CALL_DEPTH {
            return Err(self.runtime("StackOverflow", format!("call depth exceeds {MAX_CALL_DEPTH}")));
        }
        self.burn()?;
        let scope: Scope = func.params.iter().cloned().zip(args).collect();
        let saved = self.current;
        self.frames.push(vec![scope]);
        let result = self.exec_block(&func.body);
        self.frames.pop();
        self.current = saved;
        match result? {
            Flow::Return(v) => Ok(v),
            Flow::Normal => Ok(Value::Null),
        }
    }

    fn visible(&self) -> Bindings {
        let mut out: Bindings = self.globals.clone();
        if let Some(frame) = self.frames.last() {
            for scope in frame {
                for (name, value) in scope {
                    match out.iter_mut().find(|(n, _)| n == name) {
                        Some(slot) => slot.1 = value.clone(),
                        None => out.push((name.clone(), value.clone())),
                    }
                }
            }
        }
        out
    }

    fn exec_block(&mut self, body: &[Stmt]) -> Result<Flow, Fault> {
        if let Some(frame) = self.frames.last_mut() {
            frame.push(Vec::new());
        }
        let mut flow = Ok(Flow::Normal);
        for s in body {
            match self.exec(s) {
                Ok(Flow::Normal) => continue,
                other => {
                    flow = other;
                    break;
                }
            }
        }
        if let Some(frame) = self.frames.last_mut() {
            frame.pop();
        }
        flow
    }

    fn forced(&self, id: StmtId) -> Option<Forcing> {
        self.hooks.forcing.filter(|f| match f {
            Forcing::Condition { stmt, .. } | Forcing::Skip { stmt } => *stmt == id,
        })
    }

    fn exec(&mut self, s: &Stmt) -> Result<Flow, Fault> {
        self.current = s.id;
        self.covered.insert(s.id);
        self.burn()?;
        let snap_index = if self.hooks.snapshot_at.contains(&s.id) {
            self.snapshots.push(Snapshot { stmt_id: s.id, bindings: self.visible(), branch: None });
            Some(self.snapshots.len() - 1)
        } else {
            None
        };
        let forcing = self.forced(s.id);
        if let Some(Forcing::Skip { .. }) = forcing {
            return Ok(Flow::Normal);
        }

        match &s.kind {
            StmtKind::Let { name, value } => {
                let v = self.eval(value)?;
                self.current = s.id;
                self.declare(name, v);
                Ok(Flow::Normal)
            }
            StmtKind::Assign { target, value } => {
                let v = self.eval(value)?;
                self.current = s.id;
                self.assign(target, v)?;
                Ok(Flow::Normal)
            }
            StmtKind::If { cond, then_body, else_body } => {
                let taken = match forcing {
                    Some(Forcing::Condition { value, .. }) => value,
                    _ => self.truth(cond, s.id)?,
                };
                if let Some(i) = snap_index {
                    self.snapshots[i].branch = Some(taken);
                }
                if taken {
                    self.exec_block(then_body)
                } else if let Some(else_body) = else_body {
                    self.exec_block(else_body)
                } else {
                    Ok(Flow::Normal)
                }
            }
            StmtKind::While { cond, body } => {
                let mut first = true;
                loop {
                    let taken = match forcing {
                        Some(Forcing::Condition { value, .. }) => value,
                        _ => self.truth(cond, s.id)?,
                    };
                    if first {
                        if let Some(i) = snap_index {
                            self.snapshots[i].branch = Some(taken);
                        }
                        first = false;
                    }
                    if !taken {
                        return Ok(Flow::Normal);
                    }
                    match self.exec_block(body)? {
                        Flow::Normal => {}
                        ret => return Ok(ret),
                    }
                    self.current = s.id;
                    self.burn()?;
                }
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.eval(e)?,
                    None => Value::Null,
                };
                Ok(Flow::Return(v))
            }
            StmtKind::Assert(e) => {
                if self.truth(e, s.id)? {
                    Ok(Flow::Normal)
                } else {
                    Err(self.fault(TraceOutcome::AssertFail, "AssertionFailed", "assertion failed".into()))
                }
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
                Ok(Flow::Normal)
            }
        }
    }

    fn truth(&mut self, e: &Expr, stmt: StmtId) -> Result<bool, Fault> {
        let v = self.eval(e)?;
        self.current = stmt;
        match v {
            Value::Bool(b) => Ok(b),
            other => Err(self.runtime("TypeError", format!("condition is {}, expected bool", other.type_name()))),
        }
    }

    fn declare(&mut self, name: &str, v: Value) {
        if let Some(scope) = self.frames.last_mut().and_then(|f| f.last_mut()) {
            match scope.iter_mut().find(|(n, _)| n == name) {
                Some(slot) => slot.1 = v,
                None => scope.push((name.to_string(), v)),
            }
        } else {
            self.globals.push((name.to_string(), v));
        }
    }

    fn slot(&mut self, name: &str) -> Option<&mut Value> {
        if let Some(frame) = self.frames.last_mut() {
            for scope in frame.iter_mut().rev() {
                if let Some((_, v)) = scope.iter_mut().rev().find(|(n, _)| n == name) {
                    return Some(v);
                }
            }
        }
        self.globals.iter_mut().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn assign(&mut self, target: &Place, v: Value) -> Result<(), Fault> {
        let Some(slot) = self.slot(&target.var) else {
            return Err(self.runtime("UnboundVariable", format!("variable `{}` is not bound", target.var)));
        };
        match set_path(slot, &target.fields, v) {
            Ok(()) => Ok(()),
            Err(PathError::Null(field)) => {
                Err(self.fault(TraceOutcome::NullDeref, "NullDeref", format!("field {field} of null")))
            }
            Err(PathError::NotRecord(field, ty)) => {
                Err(self.runtime("TypeError", format!("cannot set field {field} on {ty}")))
            }
        }
    }

    fn lookup(&self, name: &str) -> Option<&Value> {
        if let Some(frame) = self.frames.last() {
            for scope in frame.iter().rev() {
                if let Some((_, v)) = scope.iter().rev().find(|(n, _)| n == name) {
                    return Some(v);
                }
            }
        }
        self.globals.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn eval(&mut self, e: &Expr) -> Result<Value, Fault> {
        match e {
            Expr::Int(n) => Ok(Value::Int(*n)),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Null => Ok(Value::Null),
            Expr::Var(name) => self
                .lookup(name)
                .cloned()
                .ok_or_else(|| self.runtime("UnboundVariable", format!("variable `{name}` is not bound"))),
            Expr::Field(base, field) => match self.eval(base)? {
                Value::Record(mut map) => map
                    .remove(field)
                    .ok_or_else(|| self.runtime("NoSuchField", format!("record has no field {field}"))),
                Value::Null => Err(self.fault(TraceOutcome::NullDeref, "NullDeref", format!("field {field} of null"))),
                other => Err(self.runtime("TypeError", format!("field {field} of {}", other.type_name()))),
            },
            Expr::Record(fields) => {
                let mut map = BTreeMap::new();
                for (name, value) in fields {
                    let v = self.eval(value)?;
                    map.insert(name.clone(), v);
                }
                Ok(Value::Record(map))
            }
            Expr::Unary(UnOp::Not, inner) => match self.eval(inner)? {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(self.runtime("TypeError", format!("`!` applied to {}", other.type_name()))),
            },
            Expr::Unary(UnOp::Neg, inner) => match self.eval(inner)? {
                Value::Int(n) => n
                    .checked_neg()
                    .map(Value::Int)
                    .ok_or_else(|| self.runtime("Overflow", "integer overflow")),
                other => Err(self.runtime("TypeError", format!("`-` applied to {}", other.type_name()))),
            },
            Expr::Binary(BinOp::And, lhs, rhs) => {
                if self.bool_operand(lhs, "&&")? {
                    Ok(Value::Bool(self.bool_operand(rhs, "&&")?))
                } else {
                    Ok(Value::Bool(false))
                }
            }
            Expr::Binary(BinOp::Or, lhs, rhs) => {
                if self.bool_operand(lhs, "||")? {
                    Ok(Value::Bool(true))
                } else {
                    Ok(Value::Bool(self.bool_operand(rhs, "||")?))
                }
            }
            Expr::Binary(op, lhs, rhs) => {
                let a = self.eval(lhs)?;
                let b = self.eval(rhs)?;
                self.binary(*op, a, b)
            }
            Expr::Call(name, args) => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.eval(a)?);
                }
                self.call(name, values)
            }
        }
    }

    fn bool_operand(&mut self, e: &Expr, op: &str) -> Result<bool, Fault> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            other => Err(self.runtime("TypeError", format!("`{op}` operand is {}", other.type_name()))),
        }
    }

    fn binary(&self, op: BinOp, a: Value, b: Value) -> Result<Value, Fault> {
        match op {
            BinOp::Eq => return Ok(Value::Bool(a == b)),
            BinOp::Ne => return Ok(Value::Bool(a != b)),
            _ => {}
        }
        let (x, y) = match (&a, &b) {
            (Value::Int(x), Value::Int(y)) => (*x, *y),
            _ => {
                return Err(self.runtime(
                    "TypeError",
                    format!("`{}` on {} and {}", op.symbol(), a.type_name(), b.type_name()),
                ))
            }
        };
        let overflow = || self.runtime("Overflow", "integer overflow");
        Ok(match op {
            BinOp::Add => Value::Int(x.checked_add(y).ok_or_else(overflow)?),
            BinOp::Sub => Value::Int(x.checked_sub(y).ok_or_else(overflow)?),
            BinOp::Mul => Value::Int(x.checked_mul(y).ok_or_else(overflow)?),
            BinOp::Div => {
                if y == 0 {
                    return Err(self.runtime("DivisionByZero", "division by zero"));
                }
                Value::Int(x.checked_div(y).ok_or_else(overflow)?)
            }
            BinOp::Lt => Value::Bool(x < y),
            BinOp::Le => Value::Bool(x <= y),
            BinOp::Gt => Value::Bool(x > y),
            BinOp::Ge => Value::Bool(x >= y),
            BinOp::Eq | BinOp::Ne | BinOp::And | BinOp::Or => unreachable!(),
        })
    }
}

enum PathError {
    Null(String),
    NotRecord(String, &'static str),
}

fn set_path(slot: &mut Value, fields: &[String], v: Value) -> Result<(), PathError> {
    let Some((field, rest)) = fields.split_first() else {
        *slot = v;
        return Ok(());
    };
    match slot {
        Value::Record(map) => set_path(map.entry(field.clone()).or_insert(Value::Null), rest, v),
        Value::Null => Err(PathError::Null(field.clone())),
        other => Err(PathError::NotRecord(field.clone(), other.type_name())),
    }
}

/// Why an expression could not be evaluated over a set of bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalError(pub String);

/// Evaluates a call-free expression against recorded bindings.
pub fn eval_with_bindings(e: &Expr, bindings: &Bindings) -> Result<Value, EvalError> {
    let hooks = Hooks::default();
    let mut m = Machine {
        program: None,
        hooks: &hooks,
        fuel: FUEL_LIMIT,
        current: 0,
        frames: Vec::new(),
        globals: bindings.clone(),
        covered: BTreeSet::new(),
        snapshots: Vec::new(),
    };
    m.eval(e).map_err(|f| EvalError(format!("{}: {}", f.kind, f.detail)))
}

/// Runs one test function under the given hooks and environment globals.
pub fn run_test_with_env(
    program: &Program,
    test_name: &str,
    hooks: &Hooks,
    globals: &BTreeMap<String, Value>,
) -> ExecutionTrace {
    let mut m = Machine::new(program, hooks, globals);
    let result = m.call(test_name, Vec::new());
    let (outcome, error_stmt, failure) = match result {
        Ok(_) => (TraceOutcome::Pass, None, String::new()),
        Err(fault) => {
            let function = program
                .location(fault.stmt)
                .map(|l| l.function.clone())
                .unwrap_or_else(|| test_name.to_string());
            let text = format!(
                "{}: {}\n\tat {} (line {})\n\tat {}",
                fault.kind,
                fault.detail,
                function,
                program.line_of(fault.stmt),
                test_name
            );
            // An unknown test never reaches a statement.
            let stmt = program.location(fault.stmt).map(|_| fault.stmt).filter(|s| m.covered.contains(s));
            (fault.outcome, stmt, text)
        }
    };
    ExecutionTrace {
        test: test_name.to_string(),
        covered: m.covered,
        snapshots: m.snapshots,
        outcome,
        error_stmt,
        failure,
    }
}

pub fn run_test(program: &Program, test_name: &str, hooks: &Hooks) -> ExecutionTrace {
    run_test_with_env(program, test_name, hooks, &BTreeMap::new())
}

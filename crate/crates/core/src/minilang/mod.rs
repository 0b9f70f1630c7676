//! A tiny imperative language with records and `null`, used as the fixture
//! ecosystem the pipeline builds, tests and repairs.
//!
//! ```text
//! program  := function*
//! function := "fn" IDENT "(" [IDENT ("," IDENT)*] ")" block
//! block    := "{" stmt* "}"
//! stmt     := "let" IDENT "=" expr ";"
//!           | place "=" expr ";"
//!           | "if" "(" expr ")" block ["else" (block | if-stmt)]
//!           | "while" "(" expr ")" block
//!           | "return" [expr] ";"
//!           | "assert" expr ";"
//!           | expr ";"
//! place    := IDENT ("." IDENT)*
//! expr     := or
//! or       := and ("||" and)*
//! and      := eq ("&&" eq)*
//! eq       := cmp (("==" | "!=") cmp)*
//! cmp      := add (("<" | "<=" | ">" | ">=") add)*
//! add      := mul (("+" | "-") mul)*
//! mul      := unary (("*" | "/") unary)*
//! unary    := ("!" | "-") unary | postfix
//! postfix  := primary ("." IDENT)*
//! primary  := INT | "true" | "false" | "null" | IDENT | IDENT "(" [expr ("," expr)*] ")"
//!           | "{" [IDENT ":" expr ("," IDENT ":" expr)* [","]] "}" | "(" expr ")"
//! ```
//!
//! Line comments start with `//`. Test functions are the zero-argument
//! functions whose name starts with `test_`.

mod ast;
mod interp;
mod lexer;
mod parser;
mod printer;
mod value;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use ast::*;
pub use interp::{
    eval_with_bindings, run_test, run_test_with_env, EvalError, ExecutionTrace, Forcing, Hooks, Snapshot,
    TraceOutcome, FUEL_LIMIT,
};
pub use parser::{parse, parse_files};
pub use printer::{expr_to_string, program_to_string};
pub use value::{lookup, Bindings, Value};

use crate::report::{CaseStatus, TestCase, TestReport, TestSuite};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct SyntaxError {
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.file.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}:{}:{}: {}", self.file, self.line, self.col, self.message)
        }
    }
}

/// Parses a standalone expression, e.g. a synthesized predicate.
pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let program = parse(&format!("fn __expr() {{ return {text}; }}"))?;
    match program.functions.first().and_then(|f| f.body.first()).map(|s| &s.kind) {
        Some(StmtKind::Return(Some(e))) if program.stmt_count() == 1 => Ok(e.clone()),
        _ => Err(SyntaxError {
            file: String::new(),
            line: 0,
            col: 0,
            message: format!("`{text}` is not a single expression"),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("program defines no test functions")]
    NoTests,
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    pub report: TestReport,
    pub traces: Vec<ExecutionTrace>,
}

impl SuiteRun {
    pub fn all_passed(&self) -> bool {
        self.traces.iter().all(ExecutionTrace::passed)
    }
}

pub fn test_case_for(trace: &ExecutionTrace) -> TestCase {
    let mut case = TestCase::passed(trace.test.clone());
    let status = match trace.outcome {
        TraceOutcome::Pass => return case,
        TraceOutcome::AssertFail => CaseStatus::Failed,
        TraceOutcome::NullDeref | TraceOutcome::RuntimeError => CaseStatus::Errored,
    };
    case.status = status;
    let first_line = trace.failure.lines().next().unwrap_or_default();
    let (kind, detail) = first_line.split_once(": ").unwrap_or((first_line, ""));
    case.failure_type = kind.to_string();
    case.message = detail.to_string();
    case.trace = trace.failure.clone();
    case
}

/// Runs every test function in declaration order.
pub fn run_suite_with_env(
    program: &Program,
    suite_name: &str,
    hooks: &Hooks,
    globals: &BTreeMap<String, Value>,
) -> Result<SuiteRun, HarnessError> {
    let tests: Vec<&Function> = program.tests().collect();
    if tests.is_empty() {
        return Err(HarnessError::NoTests);
    }
    let traces: Vec<ExecutionTrace> = tests
        .iter()
        .map(|t| run_test_with_env(program, &t.name, hooks, globals))
        .collect();
    let cases = traces.iter().map(test_case_for).collect();
    Ok(SuiteRun {
        report: TestReport { suites: vec![TestSuite::from_cases(suite_name, cases)], warnings: Vec::new() },
        traces,
    })
}

pub fn run_suite(program: &Program) -> Result<SuiteRun, HarnessError> {
    run_suite_with_env(program, "minilang", &Hooks::default(), &BTreeMap::new())
}

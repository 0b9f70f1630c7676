use std::fmt;

use serde::{Deserialize, Serialize};

pub type StmtId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Null,
    Var(String),
    Field(Box<Expr>, String),
    Record(Vec<(String, Expr)>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn not(inner: Expr) -> Expr {
        Expr::Unary(UnOp::Not, Box::new(inner))
    }

    /// `a.b.c` as a dotted path when the expression is a variable followed by
    /// field accesses.
    pub fn as_path(&self) -> Option<String> {
        match self {
            Expr::Var(v) => Some(v.clone()),
            Expr::Field(base, f) => base.as_path().map(|p| format!("{p}.{f}")),
            _ => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::printer::expr_to_string(self))
    }
}

/// Assignment target: a variable optionally followed by a field path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Place {
    pub var: String,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StmtKind {
    Let { name: String, value: Expr },
    Assign { target: Place, value: Expr },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    While { cond: Expr, body: Vec<Stmt> },
    Return(Option<Expr>),
    Assert(Expr),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stmt {
    pub id: StmtId,
    pub kind: StmtKind,
}

impl Stmt {
    pub fn is_control(&self) -> bool {
        matches!(self.kind, StmtKind::If { .. } | StmtKind::While { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
}

impl Function {
    pub fn is_test(&self) -> bool {
        self.name.starts_with("test_")
    }
}

/// Byte range in a source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// Where a statement lives in the source it was parsed from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StmtLocation {
    pub file: usize,
    pub function: String,
    pub line: u32,
    pub span: Span,
    /// Span of the condition expression for `if`/`while`.
    pub cond_span: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub functions: Vec<Function>,
    /// Source file names, indexed by `StmtLocation::file`.
    pub files: Vec<String>,
    /// Indexed by statement id.
    pub locations: Vec<StmtLocation>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn tests(&self) -> impl Iterator<Item = &Function> {
        self.functions.iter().filter(|f| f.is_test())
    }

    pub fn stmt_count(&self) -> usize {
        self.locations.len()
    }

    pub fn location(&self, id: StmtId) -> Option<&StmtLocation> {
        self.locations.get(id as usize)
    }

    pub fn stmt(&self, id: StmtId) -> Option<&Stmt> {
        fn find(body: &[Stmt], id: StmtId) -> Option<&Stmt> {
            for s in body {
                if s.id == id {
                    return Some(s);
                }
                let nested = match &s.kind {
                    StmtKind::If { then_body, else_body, .. } => {
                        find(then_body, id).or_else(|| else_body.as_deref().and_then(|b| find(b, id)))
                    }
                    StmtKind::While { body, .. } => find(body, id),
                    _ => None,
                };
                if nested.is_some() {
                    return nested;
                }
            }
            None
        }
        self.functions.iter().find_map(|f| find(&f.body, id))
    }

    /// Line of a statement, 1-based; 0 when unknown.
    pub fn line_of(&self, id: StmtId) -> u32 {
        self.location(id).map_or(0, |l| l.line)
    }
}

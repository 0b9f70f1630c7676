//! Canonical source rendering. Parsing the output yields an equal AST.

use std::fmt::Write as _;

use super::ast::*;

pub fn program_to_string(program: &Program) -> String {
    let mut out = String::new();
    for (i, f) in program.functions.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "fn {}({}) ", f.name, f.params.join(", "));
        block(&f.body, 0, &mut out);
        out.push('\n');
    }
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("    ");
    }
}

fn block(body: &[Stmt], level: usize, out: &mut String) {
    out.push_str("{\n");
    for s in body {
        stmt(s, level + 1, out);
    }
    indent(level, out);
    out.push('}');
}

fn stmt(s: &Stmt, level: usize, out: &mut String) {
    indent(level, out);
    match &s.kind {
        StmtKind::Let { name, value } => {
            let _ = writeln!(out, "let {name} = {};", expr_to_string(value));
        }
        StmtKind::Assign { target, value } => {
            out.push_str(&target.var);
            for f in &target.fields {
                out.push('.');
                out.push_str(f);
            }
            let _ = writeln!(out, " = {};", expr_to_string(value));
        }
        StmtKind::If { cond, then_body, else_body } => {
            let _ = write!(out, "if ({}) ", expr_to_string(cond));
            block(then_body, level, out);
            if let Some(else_body) = else_body {
                out.push_str(" else ");
                block(else_body, level, out);
            }
            out.push('\n');
        }
        StmtKind::While { cond, body } => {
            let _ = write!(out, "while ({}) ", expr_to_string(cond));
            block(body, level, out);
            out.push('\n');
        }
        StmtKind::Return(None) => out.push_str("return;\n"),
        StmtKind::Return(Some(e)) => {
            let _ = writeln!(out, "return {};", expr_to_string(e));
        }
        StmtKind::Assert(e) => {
            let _ = writeln!(out, "assert {};", expr_to_string(e));
        }
        StmtKind::Expr(e) => {
            let text = expr_to_string(e);
            if text.starts_with('{') {
                let _ = writeln!(out, "({text});");
            } else {
                let _ = writeln!(out, "{text};");
            }
        }
    }
}

pub fn expr_to_string(e: &Expr) -> String {
    let mut out = String::new();
    expr(e, &mut out);
    out
}

fn expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Expr::Null => out.push_str("null"),
        Expr::Var(v) => out.push_str(v),
        Expr::Field(base, f) => {
            let wrap = matches!(**base, Expr::Binary(..) | Expr::Unary(..))
                || matches!(**base, Expr::Int(n) if n < 0);
            paren(base, wrap, out);
            out.push('.');
            out.push_str(f);
        }
        Expr::Record(fields) => {
            out.push('{');
            for (i, (name, value)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(name);
                out.push_str(": ");
                expr(value, out);
            }
            out.push('}');
        }
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnOp::Not => '!',
                UnOp::Neg => '-',
            });
            let wrap = matches!(**inner, Expr::Binary(..))
                || (*op == UnOp::Neg && matches!(**inner, Expr::Int(_)));
            paren(inner, wrap, out);
        }
        Expr::Binary(op, lhs, rhs) => {
            let prec = op.precedence();
            let lwrap = matches!(**lhs, Expr::Binary(l, ..) if l.precedence() < prec);
            let rwrap = matches!(**rhs, Expr::Binary(r, ..) if r.precedence() <= prec);
            paren(lhs, lwrap, out);
            let _ = write!(out, " {} ", op.symbol());
            paren(rhs, rwrap, out);
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                expr(a, out);
            }
            out.push(')');
        }
    }
}

fn paren(e: &Expr, wrap: bool, out: &mut String) {
    if wrap {
        out.push('(');
        expr(e, out);
        out.push(')');
    } else {
        expr(e, out);
    }
}

use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::SyntaxError;

const MAX_NESTING: usize = 96;

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    file: &'a str,
    file_index: usize,
    function: String,
    depth: usize,
    next_id: StmtId,
    locations: Vec<StmtLocation>,
}

/// Parses a single source text into a program.
pub fn parse(source: &str) -> Result<Program, SyntaxError> {
    parse_files(&[("main.ml", source)])
}

/// Parses several source files into one program. Statement ids run densely
/// across files in the given order.
pub fn parse_files<N: AsRef<str>, S: AsRef<str>>(files: &[(N, S)]) -> Result<Program, SyntaxError> {
    let mut program = Program { functions: Vec::new(), files: Vec::new(), locations: Vec::new() };
    let mut next_id = 0;
    for (index, (name, text)) in files.iter().enumerate() {
        let name = name.as_ref();
        let tokens = tokenize(text.as_ref(), name)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            file: name,
            file_index: index,
            function: String::new(),
            depth: 0,
            next_id,
            locations: Vec::new(),
        };
        while parser.peek() != &Tok::Eof {
            let f = parser.function()?;
            program.functions.push(f);
        }
        next_id = parser.next_id;
        program.locations.extend(parser.locations);
        program.files.push(name.to_string());
    }

    let mut seen = HashSet::new();
    for f in &program.functions {
        if !seen.insert(f.name.as_str()) {
            return Err(SyntaxError {
                file: String::new(),
                line: 0,
                col: 0,
                message: format!("function `{}` defined twice", f.name),
            });
        }
    }
    Ok(program)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, offset: usize) -> &Tok {
        let i = (self.pos + offset).min(self.tokens.len() - 1);
        &self.tokens[i].tok
    }

    fn current(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        let t = self.current();
        SyntaxError { file: self.file.to_string(), line: t.line, col: t.col, message: message.into() }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, SyntaxError> {
        if *self.peek() == tok {
            Ok(self.advance())
        } else {
            Err(self.error(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name)
            }
            other => Err(self.error(format!("expected {what}, found {}", describe(&other)))),
        }
    }

    fn enter(&mut self) -> Result<(), SyntaxError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(self.error("nesting too deep"));
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    fn function(&mut self) -> Result<Function, SyntaxError> {
        self.expect(Tok::Fn, "`fn`")?;
        let name = self.ident("function name")?;
        self.function = name.clone();
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if *self.peek() != Tok::RParen {
            loop {
                params.push(self.ident("parameter name")?);
                if *self.peek() == Tok::Comma {
                    self.advance();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        let body = self.block()?;
        Ok(Function { name, params, body })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, SyntaxError> {
        self.enter()?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut body = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return Err(self.error("unbalanced `{`: reached end of file"));
            }
            body.push(self.stmt()?);
        }
        self.advance();
        self.leave();
        Ok(body)
    }

    fn stmt(&mut self) -> Result<Stmt, SyntaxError> {
        let first = self.current().clone();
        let id = self.next_id;
        self.next_id += 1;
        self.locations.push(StmtLocation {
            file: self.file_index,
            function: self.function.clone(),
            line: first.line,
            span: Span { start: first.start, end: first.end },
            cond_span: None,
        });

        let mut cond_span = None;
        let kind = match self.peek() {
            Tok::Let => {
                self.advance();
                let name = self.ident("variable name")?;
                self.expect(Tok::Assign, "`=`")?;
                let value = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Let { name, value }
            }
            Tok::If => {
                self.advance();
                let (cond, span) = self.condition()?;
                cond_span = Some(span);
                let then_body = self.block()?;
                let else_body = if *self.peek() == Tok::Else {
                    self.advance();
                    if *self.peek() == Tok::If {
                        self.enter()?;
                        let nested = self.stmt()?;
                        self.leave();
                        Some(vec![nested])
                    } else {
                        Some(self.block()?)
                    }
                } else {
                    None
                };
                StmtKind::If { cond, then_body, else_body }
            }
            Tok::While => {
                self.advance();
                let (cond, span) = self.condition()?;
                cond_span = Some(span);
                let body = self.block()?;
                StmtKind::While { cond, body }
            }
            Tok::Return => {
                self.advance();
                let value = if *self.peek() == Tok::Semi { None } else { Some(self.expr()?) };
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Return(value)
            }
            Tok::Assert => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::Semi, "`;`")?;
                StmtKind::Assert(e)
            }
            Tok::LBrace => return Err(self.error("a bare block is not a statement")),
            _ => {
                let e = self.expr()?;
                if *self.peek() == Tok::Assign {
                    let target = to_place(&e).ok_or_else(|| self.error("left side of `=` is not assignable"))?;
                    self.advance();
                    let value = self.expr()?;
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Assign { target, value }
                } else {
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Expr(e)
                }
            }
        };
        let end = self.tokens[self.pos.saturating_sub(1)].end;
        let index = (id - self.locations_base()) as usize;
        let loc = &mut self.locations[index];
        loc.span.end = end;
        loc.cond_span = cond_span;
        Ok(Stmt { id, kind })
    }

    fn locations_base(&self) -> StmtId {
        self.next_id - self.locations.len() as StmtId
    }

    fn condition(&mut self) -> Result<(Expr, Span), SyntaxError> {
        self.expect(Tok::LParen, "`(`")?;
        let start = self.current().start;
        let cond = self.expr()?;
        let end = self.tokens[self.pos - 1].end;
        self.expect(Tok::RParen, "`)`")?;
        Ok((cond, Span { start, end }))
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        self.enter()?;
        let e = self.binary(1)?;
        self.leave();
        Ok(e)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, SyntaxError> {
        let mut lhs = self.unary()?;
        while let Some(op) = binop(self.peek()) {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.advance();
            self.enter()?;
            let rhs = self.binary(prec + 1)?;
            self.leave();
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek() {
            Tok::Bang => {
                self.advance();
                self.enter()?;
                let inner = self.unary()?;
                self.leave();
                Ok(Expr::Unary(UnOp::Not, Box::new(inner)))
            }
            Tok::Minus => {
                self.advance();
                if let Tok::Int(n) = *self.peek() {
                    // Folded so that `-1` is a literal, not a negation.
                    if !matches!(self.peek_at(1), Tok::Dot) {
                        self.advance();
                        let value = if n == 1u64 << 63 {
                            i64::MIN
                        } else {
                            i64::try_from(n)
                                .map(|v| -v)
                                .map_err(|_| self.error("integer literal out of range"))?
                        };
                        return Ok(Expr::Int(value));
                    }
                }
                self.enter()?;
                let inner = self.unary()?;
                self.leave();
                Ok(Expr::Unary(UnOp::Neg, Box::new(inner)))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, SyntaxError> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::Dot {
            self.advance();
            let field = self.ident("field name")?;
            e = Expr::Field(Box::new(e), field);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        let tok = self.peek().clone();
        match tok {
            Tok::Int(n) => {
                self.advance();
                i64::try_from(n).map(Expr::Int).map_err(|_| self.error("integer literal out of range"))
            }
            Tok::True => {
                self.advance();
                Ok(Expr::Bool(true))
            }
            Tok::False => {
                self.advance();
                Ok(Expr::Bool(false))
            }
            Tok::Null => {
                self.advance();
                Ok(Expr::Null)
            }
            Tok::Ident(name) => {
                self.advance();
                if *self.peek() == Tok::LParen {
                    self.advance();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if *self.peek() == Tok::Comma {
                                self.advance();
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::LBrace => {
                self.advance();
                let mut fields: Vec<(String, Expr)> = Vec::new();
                while *self.peek() != Tok::RBrace {
                    let name = self.ident("field name")?;
                    if fields.iter().any(|(f, _)| *f == name) {
                        return Err(self.error(format!("duplicate field `{name}` in record")));
                    }
                    self.expect(Tok::Colon, "`:`")?;
                    let value = self.expr()?;
                    fields.push((name, value));
                    if *self.peek() == Tok::Comma {
                        self.advance();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RBrace, "`}`")?;
                Ok(Expr::Record(fields))
            }
            other => Err(self.error(format!("expected an expression, found {}", describe(&other)))),
        }
    }
}

fn binop(tok: &Tok) -> Option<BinOp> {
    Some(match tok {
        Tok::Plus => BinOp::Add,
        Tok::Minus => BinOp::Sub,
        Tok::Star => BinOp::Mul,
        Tok::Slash => BinOp::Div,
        Tok::EqEq => BinOp::Eq,
        Tok::NotEq => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::AndAnd => BinOp::And,
        Tok::OrOr => BinOp::Or,
        _ => return None,
    })
}

fn to_place(e: &Expr) -> Option<Place> {
    match e {
        Expr::Var(v) => Some(Place { var: v.clone(), fields: Vec::new() }),
        Expr::Field(base, f) => {
            let mut p = to_place(base)?;
            p.fields.push(f.clone());
            Some(p)
        }
        _ => None,
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(name) => format!("identifier `{name}`"),
        Tok::Int(n) => format!("integer {n}"),
        Tok::Eof => "end of file".into(),
        other => format!("{other:?}"),
    }
}

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde_json::Value;

use super::builtins::Builtin;
use super::lexer::{tokenize, Pos, Tok, Token};
use crate::error::CompileError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone)]
pub(crate) struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub(crate) enum ExprKind {
    Lit(Value),
    Var(String),
    Object(Vec<(String, Expr)>),
    Array(Vec<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Field(Box<Expr>, String),
    Index(Box<Expr>, Box<Expr>),
    Call(Builtin, Vec<Expr>),
}

#[derive(Debug, Clone)]
pub(crate) enum Stmt {
    Let(String, Expr),
    Assign(String, Expr, Pos),
    If(Expr, Vec<Stmt>, Option<Vec<Stmt>>),
    While(Expr, Vec<Stmt>),
    For(String, Expr, Vec<Stmt>),
    Return(Expr),
    Break,
    Continue,
    Expr(Expr),
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    scopes: Vec<Vec<String>>,
    loops: u32,
    returns: u32,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn next(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), CompileError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self
                .pos()
                .error(format!("expected '{s}', found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, CompileError> {
        match self.next() {
            Token {
                tok: Tok::Ident(name), ..
            } => Ok(name),
            t => Err(t.pos.error(format!("expected identifier, found {}", describe(&t.tok)))),
        }
    }

    fn declared(&self, name: &str) -> bool {
        self.scopes.iter().any(|s| s.iter().any(|n| n == name))
    }

    fn declare(&mut self, name: String) {
        self.scopes.last_mut().expect("scope stack is never empty").push(name);
    }

    fn block(&mut self) -> Result<Vec<Stmt>, CompileError> {
        self.expect_sym("{")?;
        self.scopes.push(Vec::new());
        let mut body = Vec::new();
        while !self.is_sym("}") {
            if *self.peek() == Tok::Eof {
                return Err(self.pos().error("expected '}' before end of script"));
            }
            body.push(self.statement()?);
        }
        self.next();
        self.scopes.pop();
        Ok(body)
    }

    fn statement(&mut self) -> Result<Stmt, CompileError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Let => {
                self.next();
                let name = self.ident()?;
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_sym(";")?;
                self.declare(name.clone());
                Ok(Stmt::Let(name, value))
            }
            Tok::If => {
                self.next();
                let cond = self.expr()?;
                let then = self.block()?;
                let otherwise = if matches!(self.peek(), Tok::Else) {
                    self.next();
                    if matches!(self.peek(), Tok::If) {
                        Some(alloc::vec![self.statement()?])
                    } else {
                        Some(self.block()?)
                    }
                } else {
                    None
                };
                Ok(Stmt::If(cond, then, otherwise))
            }
            Tok::While => {
                self.next();
                let cond = self.expr()?;
                self.loops += 1;
                let body = self.block()?;
                self.loops -= 1;
                Ok(Stmt::While(cond, body))
            }
            Tok::For => {
                self.next();
                let var = self.ident()?;
                match self.next().tok {
                    Tok::In => {}
                    other => return Err(pos.error(format!("expected 'in', found {}", describe(&other)))),
                }
                let iter = self.expr()?;
                self.scopes.push(alloc::vec![var.clone()]);
                self.loops += 1;
                let body = self.block();
                self.loops -= 1;
                self.scopes.pop();
                Ok(Stmt::For(var, iter, body?))
            }
            Tok::Return => {
                self.next();
                let value = self.expr()?;
                self.expect_sym(";")?;
                self.returns += 1;
                Ok(Stmt::Return(value))
            }
            Tok::Break | Tok::Continue => {
                let t = self.next();
                if self.loops == 0 {
                    return Err(pos.error(format!("{} outside of a loop", describe(&t.tok))));
                }
                self.expect_sym(";")?;
                Ok(if t.tok == Tok::Break {
                    Stmt::Break
                } else {
                    Stmt::Continue
                })
            }
            Tok::Ident(name)
                if matches!(
                    self.tokens.get(self.at + 1).map(|t| &t.tok),
                    Some(Tok::Sym("=" | "+=" | "-="))
                ) =>
            {
                self.next();
                let op = match self.next().tok {
                    Tok::Sym(s) => s,
                    _ => unreachable!(),
                };
                if !self.declared(&name) {
                    return Err(pos.error(format!("assignment to undeclared variable '{name}'")));
                }
                let rhs = self.expr()?;
                self.expect_sym(";")?;
                let value = match op {
                    "=" => rhs,
                    compound => {
                        let bin = if compound == "+=" { BinOp::Add } else { BinOp::Sub };
                        let var = Expr {
                            kind: ExprKind::Var(name.clone()),
                            pos,
                        };
                        Expr {
                            kind: ExprKind::Binary(bin, Box::new(var), Box::new(rhs)),
                            pos,
                        }
                    }
                };
                Ok(Stmt::Assign(name, value, pos))
            }
            _ => {
                let e = self.expr()?;
                self.expect_sym(";")?;
                Ok(Stmt::Expr(e))
            }
        }
    }

    fn expr(&mut self) -> Result<Expr, CompileError> {
        let cond = self.or()?;
        if self.is_sym("?") {
            let pos = self.pos();
            self.next();
            let a = self.expr()?;
            self.expect_sym(":")?;
            let b = self.expr()?;
            return Ok(Expr {
                kind: ExprKind::Ternary(Box::new(cond), Box::new(a), Box::new(b)),
                pos,
            });
        }
        Ok(cond)
    }

    fn or(&mut self) -> Result<Expr, CompileError> {
        let mut lhs = self.and()?;
        while self.is_sym("||") {
            let pos = self.next().pos;
            let rhs = self.and()?;
            lhs = Expr {
                kind: ExprKind::Or(Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, CompileError> {
        let mut lhs = self.binary(0)?;
        while self.is_sym("&&") {
            let pos = self.next().pos;
            let rhs = self.binary(0)?;
            lhs = Expr {
                kind: ExprKind::And(Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
        Ok(lhs)
    }

    fn binary(&mut self, level: usize) -> Result<Expr, CompileError> {
        const LEVELS: [&[(&str, BinOp)]; 4] = [
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[("<=", BinOp::Le), (">=", BinOp::Ge), ("<", BinOp::Lt), (">", BinOp::Gt)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let Some(&(_, op)) = LEVELS[level].iter().find(|(s, _)| self.is_sym(s)) else {
                return Ok(lhs);
            };
            let pos = self.next().pos;
            let rhs = self.binary(level + 1)?;
            lhs = Expr {
                kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)),
                pos,
            };
        }
    }

    fn unary(&mut self) -> Result<Expr, CompileError> {
        let pos = self.pos();
        let op = if self.eat_sym("-") {
            UnOp::Neg
        } else if self.eat_sym("!") {
            UnOp::Not
        } else {
            return self.postfix();
        };
        let operand = self.unary()?;
        Ok(Expr {
            kind: ExprKind::Unary(op, Box::new(operand)),
            pos,
        })
    }

    fn postfix(&mut self) -> Result<Expr, CompileError> {
        let mut e = self.primary()?;
        loop {
            let pos = self.pos();
            if self.eat_sym(".") {
                let field = self.ident()?;
                e = Expr {
                    kind: ExprKind::Field(Box::new(e), field),
                    pos,
                };
            } else if self.eat_sym("[") {
                let index = self.expr()?;
                self.expect_sym("]")?;
                e = Expr {
                    kind: ExprKind::Index(Box::new(e), Box::new(index)),
                    pos,
                };
            } else {
                return Ok(e);
            }
        }
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, CompileError> {
        let mut args = Vec::new();
        if self.eat_sym(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_sym(")") {
                return Ok(args);
            }
            self.expect_sym(",")?;
        }
    }

    fn primary(&mut self) -> Result<Expr, CompileError> {
        let t = self.next();
        let pos = t.pos;
        let kind = match t.tok {
            Tok::Int(i) => ExprKind::Lit(Value::from(i)),
            Tok::Float(f) => ExprKind::Lit(Value::from(f)),
            Tok::Str(s) => ExprKind::Lit(Value::String(s)),
            Tok::True => ExprKind::Lit(Value::Bool(true)),
            Tok::False => ExprKind::Lit(Value::Bool(false)),
            Tok::Null => ExprKind::Lit(Value::Null),
            Tok::Ident(name) if self.is_sym("(") => {
                self.next();
                let builtin = Builtin::lookup(&name).ok_or_else(|| pos.error(format!("unknown function '{name}'")))?;
                let args = self.call_args()?;
                let (min, max) = builtin.arity();
                if args.len() < min || args.len() > max {
                    let expected = if min == max {
                        format!("{min}")
                    } else if max == usize::MAX {
                        format!("at least {min}")
                    } else {
                        format!("{min} to {max}")
                    };
                    return Err(pos.error(format!("'{name}' takes {expected} arguments, got {}", args.len())));
                }
                ExprKind::Call(builtin, args)
            }
            Tok::Ident(name) => {
                if !self.declared(&name) {
                    return Err(pos.error(format!("undefined variable '{name}'")));
                }
                ExprKind::Var(name)
            }
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                return Ok(e);
            }
            Tok::Sym("[") => {
                let mut items = Vec::new();
                while !self.eat_sym("]") {
                    items.push(self.expr()?);
                    if !self.is_sym("]") {
                        self.expect_sym(",")?;
                    }
                }
                ExprKind::Array(items)
            }
            Tok::Sym("{") => {
                let mut fields: Vec<(String, Expr)> = Vec::new();
                while !self.eat_sym("}") {
                    let key_pos = self.pos();
                    let key = match self.next().tok {
                        Tok::Str(s) | Tok::Ident(s) => s,
                        other => return Err(key_pos.error(format!("expected object key, found {}", describe(&other)))),
                    };
                    if fields.iter().any(|(k, _)| *k == key) {
                        return Err(key_pos.error(format!("duplicate object key '{key}'")));
                    }
                    self.expect_sym(":")?;
                    fields.push((key, self.expr()?));
                    if !self.is_sym("}") {
                        self.expect_sym(",")?;
                    }
                }
                ExprKind::Object(fields)
            }
            other => return Err(pos.error(format!("unexpected {}", describe(&other)))),
        };
        Ok(Expr { kind, pos })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(n) => format!("identifier '{n}'"),
        Tok::Int(i) => format!("number {i}"),
        Tok::Float(f) => format!("number {f}"),
        Tok::Str(_) => "string literal".into(),
        Tok::Sym(s) => format!("'{s}'"),
        Tok::Eof => "end of script".into(),
        Tok::Let => "'let'".into(),
        Tok::If => "'if'".into(),
        Tok::Else => "'else'".into(),
        Tok::While => "'while'".into(),
        Tok::For => "'for'".into(),
        Tok::In => "'in'".into(),
        Tok::Return => "'return'".into(),
        Tok::Break => "'break'".into(),
        Tok::Continue => "'continue'".into(),
        Tok::True => "'true'".into(),
        Tok::False => "'false'".into(),
        Tok::Null => "'null'".into(),
    }
}

/// Parses and resolves a script. `args` is the only predeclared variable.
pub(crate) fn parse(source: &str) -> Result<Vec<Stmt>, CompileError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        at: 0,
        scopes: alloc::vec![alloc::vec!["args".into()]],
        loops: 0,
        returns: 0,
    };
    let mut body = Vec::new();
    while *p.peek() != Tok::Eof {
        body.push(p.statement()?);
    }
    if p.returns == 0 {
        return Err(p.pos().error("script has no return statement"));
    }
    Ok(body)
}

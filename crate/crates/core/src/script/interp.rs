use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde_json::{Map, Value};

use super::lexer::Pos;
use super::parser::{BinOp, Expr, ExprKind, Stmt, UnOp};
use crate::error::ScriptFault;

pub(crate) fn describe(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub(crate) fn as_number(v: &Value) -> Option<f64> {
    v.as_f64()
}

/// Finite floats only; JSON has no NaN or infinity.
pub(crate) fn number(x: f64) -> Option<Value> {
    serde_json::Number::from_f64(x).map(Value::Number)
}

/// Deep equality where `1` and `1.0` are equal.
pub(crate) fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_i64(), y.as_i64()) {
            (Some(i), Some(j)) => i == j,
            _ => x.as_f64() == y.as_f64(),
        },
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| values_equal(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| values_equal(v, w)))
        }
        _ => a == b,
    }
}

enum Flow {
    Next,
    Break,
    Continue,
    Return(Value),
}

pub(crate) struct Machine {
    scopes: Vec<Vec<(String, Value)>>,
    steps: u64,
    budget: u64,
}

type Run<T> = Result<T, ScriptFault>;

fn fault(pos: Pos, message: impl Into<String>) -> ScriptFault {
    ScriptFault::Runtime {
        line: pos.line,
        column: pos.column,
        message: message.into(),
    }
}

impl Machine {
    pub fn new(args: Value, budget: u64) -> Self {
        Self {
            scopes: alloc::vec![alloc::vec![(String::from("args"), args)]],
            steps: 0,
            budget,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn tick(&mut self) -> Run<()> {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(ScriptFault::StepBudget(self.budget));
        }
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&Value> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    fn assign(&mut self, name: &str, value: Value) -> bool {
        for scope in self.scopes.iter_mut().rev() {
            if let Some(slot) = scope.iter_mut().rev().find(|(n, _)| n == name) {
                slot.1 = value;
                return true;
            }
        }
        false
    }

    pub fn run(&mut self, body: &[Stmt]) -> Run<Value> {
        match self.block(body, Vec::new())? {
            Flow::Return(v) => Ok(v),
            _ => Err(ScriptFault::NoReturn),
        }
    }

    fn block(&mut self, body: &[Stmt], initial: Vec<(String, Value)>) -> Run<Flow> {
        self.scopes.push(initial);
        let mut flow = Ok(Flow::Next);
        for stmt in body {
            flow = self.stmt(stmt);
            if !matches!(flow, Ok(Flow::Next)) {
                break;
            }
        }
        self.scopes.pop();
        flow
    }

    fn condition(&mut self, e: &Expr) -> Run<bool> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            other => Err(fault(
                e.pos,
                format!("condition must be boolean, found {}", describe(&other)),
            )),
        }
    }

    fn stmt(&mut self, stmt: &Stmt) -> Run<Flow> {
        self.tick()?;
        match stmt {
            Stmt::Let(name, e) => {
                let v = self.eval(e)?;
                self.scopes
                    .last_mut()
                    .expect("scope stack is never empty")
                    .push((name.clone(), v));
                Ok(Flow::Next)
            }
            Stmt::Assign(name, e, pos) => {
                let v = self.eval(e)?;
                if !self.assign(name, v) {
                    return Err(fault(*pos, format!("variable '{name}' is out of scope")));
                }
                Ok(Flow::Next)
            }
            Stmt::If(cond, then, otherwise) => {
                if self.condition(cond)? {
                    self.block(then, Vec::new())
                } else if let Some(other) = otherwise {
                    self.block(other, Vec::new())
                } else {
                    Ok(Flow::Next)
                }
            }
            Stmt::While(cond, body) => {
                while self.condition(cond)? {
                    match self.block(body, Vec::new())? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
                Ok(Flow::Next)
            }
            Stmt::For(var, iter, body) => {
                let items: Vec<Value> = match self.eval(iter)? {
                    Value::Array(a) => a,
                    Value::Object(m) => m.keys().map(|k| Value::String(k.clone())).collect(),
                    other => return Err(fault(iter.pos, format!("cannot iterate over {}", describe(&other)))),
                };
                for item in items {
                    self.tick()?;
                    match self.block(body, alloc::vec![(var.clone(), item)])? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
                Ok(Flow::Next)
            }
            Stmt::Return(e) => Ok(Flow::Return(self.eval(e)?)),
            Stmt::Break => Ok(Flow::Break),
            Stmt::Continue => Ok(Flow::Continue),
            Stmt::Expr(e) => {
                self.eval(e)?;
                Ok(Flow::Next)
            }
        }
    }

    fn eval(&mut self, e: &Expr) -> Run<Value> {
        self.tick()?;
        Ok(match &e.kind {
            ExprKind::Lit(v) => v.clone(),
            ExprKind::Var(name) => self
                .lookup(name)
                .cloned()
                .ok_or_else(|| fault(e.pos, format!("variable '{name}' is out of scope")))?,
            ExprKind::Object(fields) => {
                let mut map = Map::new();
                for (k, v) in fields {
                    let v = self.eval(v)?;
                    map.insert(k.clone(), v);
                }
                Value::Object(map)
            }
            ExprKind::Array(items) => Value::Array(items.iter().map(|i| self.eval(i)).collect::<Run<_>>()?),
            ExprKind::Unary(UnOp::Not, x) => Value::Bool(!self.condition(x)?),
            ExprKind::Unary(UnOp::Neg, x) => match self.eval(x)? {
                Value::Number(n) if n.is_i64() => Value::from(
                    n.as_i64()
                        .unwrap_or(0)
                        .checked_neg()
                        .ok_or_else(|| fault(e.pos, "integer overflow"))?,
                ),
                Value::Number(n) => {
                    number(-n.as_f64().unwrap_or(0.0)).ok_or_else(|| fault(e.pos, "non-finite number"))?
                }
                other => return Err(fault(e.pos, format!("cannot negate {}", describe(&other)))),
            },
            ExprKind::And(a, b) => Value::Bool(self.condition(a)? && self.condition(b)?),
            ExprKind::Or(a, b) => Value::Bool(self.condition(a)? || self.condition(b)?),
            ExprKind::Ternary(c, a, b) => {
                if self.condition(c)? {
                    self.eval(a)?
                } else {
                    self.eval(b)?
                }
            }
            ExprKind::Binary(op, a, b) => {
                let x = self.eval(a)?;
                let y = self.eval(b)?;
                binary(*op, &x, &y).map_err(|m| fault(e.pos, m))?
            }
            ExprKind::Field(obj, field) => match self.eval(obj)? {
                Value::Object(mut m) => m
                    .remove(field)
                    .ok_or_else(|| fault(e.pos, format!("missing field '{field}'")))?,
                other => {
                    return Err(fault(
                        e.pos,
                        format!("cannot read field '{field}' of {}", describe(&other)),
                    ))
                }
            },
            ExprKind::Index(obj, index) => {
                let container = self.eval(obj)?;
                let key = self.eval(index)?;
                match (container, key) {
                    (Value::Array(mut a), Value::Number(n)) => {
                        let i = n.as_u64().filter(|i| (*i as usize) < a.len()).ok_or_else(|| {
                            fault(
                                e.pos,
                                format!("index {n} out of bounds for array of length {}", a.len()),
                            )
                        })?;
                        a.swap_remove(i as usize)
                    }
                    (Value::Object(mut m), Value::String(k)) => m
                        .remove(&k)
                        .ok_or_else(|| fault(e.pos, format!("missing field '{k}'")))?,
                    (c, k) => {
                        return Err(fault(
                            e.pos,
                            format!("cannot index {} with {}", describe(&c), describe(&k)),
                        ))
                    }
                }
            }
            ExprKind::Call(builtin, args) => {
                let values = args.iter().map(|a| self.eval(a)).collect::<Run<Vec<_>>>()?;
                builtin.call(values).map_err(|m| fault(e.pos, m))?
            }
        })
    }
}

fn binary(op: BinOp, x: &Value, y: &Value) -> Result<Value, String> {
    match op {
        BinOp::Eq => return Ok(Value::Bool(values_equal(x, y))),
        BinOp::Ne => return Ok(Value::Bool(!values_equal(x, y))),
        _ => {}
    }
    if let (Value::String(a), Value::String(b)) = (x, y) {
        return match op {
            BinOp::Add => {
                let mut s = a.clone();
                s.push_str(b);
                Ok(Value::String(s))
            }
            BinOp::Lt => Ok(Value::Bool(a < b)),
            BinOp::Le => Ok(Value::Bool(a <= b)),
            BinOp::Gt => Ok(Value::Bool(a > b)),
            BinOp::Ge => Ok(Value::Bool(a >= b)),
            _ => Err("operator not supported on strings".into()),
        };
    }
    let (Value::Number(a), Value::Number(b)) = (x, y) else {
        return Err(format!("cannot apply operator to {} and {}", describe(x), describe(y)));
    };
    if let (Some(i), Some(j)) = (a.as_i64(), b.as_i64()) {
        let exact = match op {
            BinOp::Add => i.checked_add(j),
            BinOp::Sub => i.checked_sub(j),
            BinOp::Mul => i.checked_mul(j),
            BinOp::Rem if j != 0 => i.checked_rem(j),
            BinOp::Lt => return Ok(Value::Bool(i < j)),
            BinOp::Le => return Ok(Value::Bool(i <= j)),
            BinOp::Gt => return Ok(Value::Bool(i > j)),
            BinOp::Ge => return Ok(Value::Bool(i >= j)),
            _ => None,
        };
        if let Some(r) = exact {
            return Ok(Value::from(r));
        }
    }
    let (p, q) = (a.as_f64().unwrap_or(f64::NAN), b.as_f64().unwrap_or(f64::NAN));
    let r = match op {
        BinOp::Add => p + q,
        BinOp::Sub => p - q,
        BinOp::Mul => p * q,
        BinOp::Div => {
            if q == 0.0 {
                return Err("division by zero".into());
            }
            p / q
        }
        BinOp::Rem => {
            if q == 0.0 {
                return Err("division by zero".into());
            }
            libm::fmod(p, q)
        }
        BinOp::Lt => return Ok(Value::Bool(p < q)),
        BinOp::Le => return Ok(Value::Bool(p <= q)),
        BinOp::Gt => return Ok(Value::Bool(p > q)),
        BinOp::Ge => return Ok(Value::Bool(p >= q)),
        BinOp::Eq | BinOp::Ne => unreachable!(),
    };
    number(r).ok_or_else(|| "arithmetic produced a non-finite number".into())
}

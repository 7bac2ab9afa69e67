use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

use super::interp::{as_number, describe, number, values_equal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Builtin {
    Has,
    Get,
    Len,
    Lower,
    Upper,
    Trim,
    Contains,
    StartsWith,
    EndsWith,
    Replace,
    Split,
    Join,
    Num,
    Int,
    Str,
    Abs,
    Floor,
    Ceil,
    Round,
    Sqrt,
    Pow,
    Exp,
    Log,
    Min,
    Max,
    Clamp,
    IsNull,
    TypeOf,
    Keys,
    Push,
}

const TABLE: &[(&str, Builtin, usize, usize)] = &[
    ("has", Builtin::Has, 2, 2),
    ("get", Builtin::Get, 2, 3),
    ("len", Builtin::Len, 1, 1),
    ("lower", Builtin::Lower, 1, 1),
    ("upper", Builtin::Upper, 1, 1),
    ("trim", Builtin::Trim, 1, 1),
    ("contains", Builtin::Contains, 2, 2),
    ("starts_with", Builtin::StartsWith, 2, 2),
    ("ends_with", Builtin::EndsWith, 2, 2),
    ("replace", Builtin::Replace, 3, 3),
    ("split", Builtin::Split, 2, 2),
    ("join", Builtin::Join, 2, 2),
    ("num", Builtin::Num, 1, 1),
    ("int", Builtin::Int, 1, 1),
    ("str", Builtin::Str, 1, 1),
    ("abs", Builtin::Abs, 1, 1),
    ("floor", Builtin::Floor, 1, 1),
    ("ceil", Builtin::Ceil, 1, 1),
    ("round", Builtin::Round, 1, 1),
    ("sqrt", Builtin::Sqrt, 1, 1),
    ("pow", Builtin::Pow, 2, 2),
    ("exp", Builtin::Exp, 1, 1),
    ("log", Builtin::Log, 1, 1),
    ("min", Builtin::Min, 1, usize::MAX),
    ("max", Builtin::Max, 1, usize::MAX),
    ("clamp", Builtin::Clamp, 3, 3),
    ("is_null", Builtin::IsNull, 1, 1),
    ("type_of", Builtin::TypeOf, 1, 1),
    ("keys", Builtin::Keys, 1, 1),
    ("push", Builtin::Push, 2, 2),
];

impl Builtin {
    pub fn lookup(name: &str) -> Option<Builtin> {
        TABLE.iter().find(|(n, ..)| *n == name).map(|(_, b, ..)| *b)
    }

    pub fn arity(self) -> (usize, usize) {
        TABLE
            .iter()
            .find(|(_, b, ..)| *b == self)
            .map(|(_, _, lo, hi)| (*lo, *hi))
            .expect("every builtin is tabled")
    }

    pub fn name(self) -> &'static str {
        TABLE
            .iter()
            .find(|(_, b, ..)| *b == self)
            .map(|(n, ..)| *n)
            .expect("every builtin is tabled")
    }

    /// Names of all builtins, for prompt documentation.
    pub fn names() -> impl Iterator<Item = &'static str> {
        TABLE.iter().map(|(n, ..)| *n)
    }

    pub fn call(self, args: Vec<Value>) -> Result<Value, String> {
        let name = self.name();
        let string = |v: &Value| -> Result<String, String> {
            v.as_str()
                .map(ToString::to_string)
                .ok_or_else(|| format!("{name}: expected string, found {}", describe(v)))
        };
        let num = |v: &Value| -> Result<f64, String> {
            as_number(v).ok_or_else(|| format!("{name}: expected number, found {}", describe(v)))
        };
        let float = |x: f64| number(x).ok_or_else(|| format!("{name}: result is not a finite number"));
        Ok(match self {
            Builtin::Has => match &args[0] {
                Value::Object(m) => Value::Bool(m.get(&string(&args[1])?).is_some_and(|v| !v.is_null())),
                other => return Err(format!("has: expected object, found {}", describe(other))),
            },
            Builtin::Get => {
                let default = args.get(2).cloned().unwrap_or(Value::Null);
                match &args[0] {
                    Value::Object(m) => m
                        .get(&string(&args[1])?)
                        .filter(|v| !v.is_null())
                        .cloned()
                        .unwrap_or(default),
                    Value::Array(a) => {
                        let i = num(&args[1])?;
                        a.get(i as usize)
                            .filter(|_| i >= 0.0 && libm::trunc(i) == i)
                            .cloned()
                            .unwrap_or(default)
                    }
                    other => return Err(format!("get: expected object or array, found {}", describe(other))),
                }
            }
            Builtin::Len => Value::from(match &args[0] {
                Value::String(s) => s.chars().count(),
                Value::Array(a) => a.len(),
                Value::Object(m) => m.len(),
                other => {
                    return Err(format!(
                        "len: expected string, array or object, found {}",
                        describe(other)
                    ))
                }
            } as u64),
            Builtin::Lower => Value::String(string(&args[0])?.to_lowercase()),
            Builtin::Upper => Value::String(string(&args[0])?.to_uppercase()),
            Builtin::Trim => Value::String(string(&args[0])?.trim().to_string()),
            Builtin::Contains => Value::Bool(match &args[0] {
                Value::String(s) => s.contains(string(&args[1])?.as_str()),
                Value::Array(a) => a.iter().any(|x| values_equal(x, &args[1])),
                Value::Object(m) => m.contains_key(&string(&args[1])?),
                other => {
                    return Err(format!(
                        "contains: expected string, array or object, found {}",
                        describe(other)
                    ))
                }
            }),
            Builtin::StartsWith => Value::Bool(string(&args[0])?.starts_with(string(&args[1])?.as_str())),
            Builtin::EndsWith => Value::Bool(string(&args[0])?.ends_with(string(&args[1])?.as_str())),
            Builtin::Replace => {
                Value::String(string(&args[0])?.replace(string(&args[1])?.as_str(), &string(&args[2])?))
            }
            Builtin::Split => {
                let sep = string(&args[1])?;
                if sep.is_empty() {
                    return Err("split: separator must not be empty".into());
                }
                Value::Array(
                    string(&args[0])?
                        .split(sep.as_str())
                        .map(|p| Value::String(p.into()))
                        .collect(),
                )
            }
            Builtin::Join => match &args[0] {
                Value::Array(items) => {
                    let parts: Vec<String> = items.iter().map(display).collect();
                    Value::String(parts.join(&string(&args[1])?))
                }
                other => return Err(format!("join: expected array, found {}", describe(other))),
            },
            Builtin::Num => match &args[0] {
                Value::Number(_) => args[0].clone(),
                Value::String(s) => {
                    let t = s.trim();
                    match t.parse::<i64>() {
                        Ok(i) => Value::from(i),
                        Err(_) => float(
                            t.parse::<f64>()
                                .map_err(|_| format!("num: cannot parse '{s}' as a number"))?,
                        )?,
                    }
                }
                Value::Bool(b) => Value::from(*b as i64),
                other => return Err(format!("num: cannot convert {}", describe(other))),
            },
            Builtin::Int => {
                let x = num(&args[0])?;
                if !x.is_finite() || libm::fabs(x) > 9.0e18 {
                    return Err("int: value out of range".into());
                }
                Value::from(libm::trunc(x) as i64)
            }
            Builtin::Str => Value::String(display(&args[0])),
            Builtin::Abs => match &args[0] {
                Value::Number(n) if n.is_i64() => Value::from(n.as_i64().unwrap_or(0).saturating_abs()),
                v => float(libm::fabs(num(v)?))?,
            },
            Builtin::Floor => float(libm::floor(num(&args[0])?))?,
            Builtin::Ceil => float(libm::ceil(num(&args[0])?))?,
            Builtin::Round => float(libm::round(num(&args[0])?))?,
            Builtin::Sqrt => float(libm::sqrt(num(&args[0])?))?,
            Builtin::Pow => float(libm::pow(num(&args[0])?, num(&args[1])?))?,
            Builtin::Exp => float(libm::exp(num(&args[0])?))?,
            Builtin::Log => float(libm::log(num(&args[0])?))?,
            Builtin::Min | Builtin::Max => {
                let items: Vec<Value> = match (&args[..], &args[0]) {
                    ([_], Value::Array(a)) => a.clone(),
                    _ => args.clone(),
                };
                let mut best: Option<(f64, Value)> = None;
                for v in items {
                    let x = num(&v)?;
                    let better = match &best {
                        None => true,
                        Some((b, _)) => {
                            if self == Builtin::Min {
                                x < *b
                            } else {
                                x > *b
                            }
                        }
                    };
                    if better {
                        best = Some((x, v));
                    }
                }
                best.map(|(_, v)| v).ok_or_else(|| format!("{name}: no values"))?
            }
            Builtin::Clamp => {
                let (x, lo, hi) = (num(&args[0])?, num(&args[1])?, num(&args[2])?);
                if lo > hi {
                    return Err("clamp: lower bound exceeds upper bound".into());
                }
                if x < lo {
                    args[1].clone()
                } else if x > hi {
                    args[2].clone()
                } else {
                    args[0].clone()
                }
            }
            Builtin::IsNull => Value::Bool(args[0].is_null()),
            Builtin::TypeOf => Value::String(describe(&args[0]).into()),
            Builtin::Keys => match &args[0] {
                Value::Object(m) => Value::Array(m.keys().map(|k| Value::String(k.clone())).collect()),
                other => return Err(format!("keys: expected object, found {}", describe(other))),
            },
            Builtin::Push => match &args[0] {
                Value::Array(a) => {
                    let mut out = a.clone();
                    out.push(args[1].clone());
                    Value::Array(out)
                }
                other => return Err(format!("push: expected array, found {}", describe(other))),
            },
        })
    }
}

/// Strings render bare, everything else as JSON.
pub(crate) fn display(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => serde_json::to_string(other).unwrap_or_default(),
    }
}

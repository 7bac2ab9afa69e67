use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

use super::schema::{SchemaDoc, SchemaType};

/// One schema violation, located by a JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Violation {
    pub path: String,
    pub reason: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let path = if self.path.is_empty() { "/" } else { &self.path };
        write!(f, "{path}: {}", self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub violations: Vec<Violation>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn escape_token(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_f64() => "number",
        Value::Number(_) => "integer",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

pub(crate) fn is_integer(n: &serde_json::Number) -> bool {
    n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.is_finite() && libm::trunc(f) == f)
}

fn type_matches(t: SchemaType, v: &Value) -> bool {
    match (t, v) {
        (SchemaType::Boolean, Value::Bool(_)) => true,
        (SchemaType::Integer, Value::Number(n)) => is_integer(n),
        (SchemaType::Number, Value::Number(_)) => true,
        (SchemaType::String, Value::String(_)) => true,
        (SchemaType::Object, Value::Object(_)) => true,
        (SchemaType::Array, Value::Array(_)) => true,
        _ => false,
    }
}

fn check(schema: &SchemaDoc, doc: &Value, path: &str, out: &mut Vec<Violation>) {
    if !type_matches(schema.schema_type, doc) {
        out.push(Violation {
            path: path.to_string(),
            reason: format!("expected {}, found {}", schema.schema_type.as_str(), type_name(doc)),
        });
        return;
    }
    if let Some(values) = &schema.enum_values {
        let hit = doc.as_str().is_some_and(|s| values.iter().any(|v| v == s));
        if !hit {
            out.push(Violation {
                path: path.to_string(),
                reason: format!("{doc} is not one of [{}]", values.join(", ")),
            });
        }
    }
    if let Value::Number(n) = doc {
        let x = n.as_f64().unwrap_or(f64::NAN);
        if let Some(min) = schema.minimum {
            if x < min {
                out.push(Violation {
                    path: path.to_string(),
                    reason: format!("{n} is below the minimum {min}"),
                });
            }
        }
        if let Some(max) = schema.maximum {
            if x > max {
                out.push(Violation {
                    path: path.to_string(),
                    reason: format!("{n} is above the maximum {max}"),
                });
            }
        }
    }
    match doc {
        Value::Object(map) => {
            for key in &schema.required {
                if !map.contains_key(key) {
                    out.push(Violation {
                        path: format!("{path}/{}", escape_token(key)),
                        reason: "required property is missing".to_string(),
                    });
                }
            }
            for (key, value) in map {
                let at = format!("{path}/{}", escape_token(key));
                match schema.property(key) {
                    Some(sub) => check(sub, value, &at, out),
                    None => out.push(Violation {
                        path: at,
                        reason: "property is not declared".to_string(),
                    }),
                }
            }
        }
        Value::Array(items) => {
            if let Some(item_schema) = &schema.items {
                for (i, item) in items.iter().enumerate() {
                    check(item_schema, item, &format!("{path}/{i}"), out);
                }
            }
        }
        _ => {}
    }
}

/// Validates an already parsed document.
pub fn validate(schema: &SchemaDoc, doc: &Value) -> Validation {
    let mut violations = Vec::new();
    check(schema, doc, "", &mut violations);
    Validation { violations }
}

/// Parses `text` and validates it. Unparseable text yields a single root
/// violation with reason "not valid JSON".
pub fn validate_response(schema: &SchemaDoc, text: &str) -> Validation {
    match serde_json::from_str::<Value>(text) {
        Ok(doc) => validate(schema, &doc),
        Err(_) => Validation {
            violations: alloc::vec![Violation {
                path: String::new(),
                reason: "not valid JSON".to_string()
            }],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{build_response_schema, FunctionContract, ParamSpec, TaskKind, ValueSpec, ValueType};
    use alloc::vec;
    use serde_json::json;

    fn boolean_schema() -> SchemaDoc {
        let c = FunctionContract::new("f", "d", vec![], ValueSpec::new(ValueType::Boolean), TaskKind::Generic).unwrap();
        build_response_schema(&c)
    }

    #[test]
    fn accepts_conforming() {
        assert!(validate_response(&boolean_schema(), r#"{"remarks":"r","results":true}"#).is_ok());
    }

    #[test]
    fn missing_remarks() {
        let v = validate_response(&boolean_schema(), r#"{"results":true}"#);
        assert_eq!(v.violations.len(), 1);
        assert_eq!(v.violations[0].path, "/remarks");
    }

    #[test]
    fn wrong_type() {
        let v = validate_response(&boolean_schema(), r#"{"remarks":"r","results":"yes"}"#);
        assert_eq!(v.violations[0].path, "/results");
        assert!(v.violations[0].reason.contains("expected boolean"));
    }

    #[test]
    fn unparseable() {
        let v = validate_response(&boolean_schema(), "Sure! The answer is yes.");
        assert_eq!(
            v.violations,
            vec![Violation {
                path: String::new(),
                reason: "not valid JSON".into()
            }]
        );
    }

    #[test]
    fn nested_paths_and_integers() {
        let ret = ValueSpec::new(ValueType::Object(vec![
            ParamSpec::new("count", ValueSpec::new(ValueType::Integer).with_range(0.0, 10.0)),
            ParamSpec::new(
                "tags",
                ValueSpec::new(ValueType::Array(alloc::boxed::Box::new(ValueSpec::new(
                    ValueType::String,
                )))),
            ),
        ]));
        let c = FunctionContract::new("f", "d", vec![], ret, TaskKind::Generic).unwrap();
        let s = build_response_schema(&c);
        assert!(validate(&s, &json!({"remarks":"","results":{"count":2.0,"tags":[]}})).is_ok());
        let v = validate(&s, &json!({"remarks":"","results":{"count":11,"tags":["a",1]}}));
        let paths: Vec<&str> = v.violations.iter().map(|x| x.path.as_str()).collect();
        assert_eq!(paths, vec!["/results/count", "/results/tags/1"]);
    }
}

//! Declarative contract documents:
//!
//! ```json
//! {
//!   "name": "predict_survival",
//!   "description": "Predicts whether a Titanic passenger survived.",
//!   "task_kind": "classification",
//!   "params": [
//!     {"name": "sex", "type": "enum", "enum": ["male", "female"]},
//!     {"name": "age", "type": "number", "minimum": 0, "maximum": 120, "required": false}
//!   ],
//!   "return": {"type": "boolean", "description": "true when the passenger survived"}
//! }
//! ```

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{FunctionContract, ParamSpec, Range, TaskKind, ValueSpec, ValueType};
use crate::error::ContractError;

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContract {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    task_kind: TaskKind,
    #[serde(default)]
    params: Vec<RawParam>,
    #[serde(rename = "return")]
    return_spec: RawValue,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    #[serde(rename = "type")]
    value_type: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    description: String,
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    minimum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maximum: Option<f64>,
    #[serde(default, rename = "enum", skip_serializing_if = "Option::is_none")]
    enum_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fields: Option<Vec<RawParam>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    items: Option<Box<RawValue>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValue {
    #[serde(rename = "type")]
    value_type: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    minimum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    maximum: Option<f64>,
    #[serde(default, rename = "enum", skip_serializing_if = "Option::is_none")]
    enum_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fields: Option<Vec<RawParam>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    items: Option<Box<RawValue>>,
}

struct Parts<'a> {
    value_type: &'a str,
    description: &'a str,
    minimum: Option<f64>,
    maximum: Option<f64>,
    enum_values: &'a Option<Vec<String>>,
    fields: &'a Option<Vec<RawParam>>,
    items: &'a Option<Box<RawValue>>,
}

fn bad(path: &str, reason: &str) -> ContractError {
    ContractError::invalid(path, reason)
}

fn to_spec(p: Parts<'_>, path: &str) -> Result<ValueSpec, ContractError> {
    let value_type = match p.value_type {
        "boolean" => ValueType::Boolean,
        "integer" => ValueType::Integer,
        "number" => ValueType::Number,
        "string" => ValueType::String,
        "enum" => ValueType::Enum(
            p.enum_values
                .clone()
                .ok_or_else(|| bad(path, "enum type needs an \"enum\" list"))?,
        ),
        "object" => {
            let fields = p
                .fields
                .as_ref()
                .ok_or_else(|| bad(path, "object type needs \"fields\""))?;
            ValueType::Object(
                fields
                    .iter()
                    .map(|f| to_param(f, &alloc::format!("{path}/{}", f.name)))
                    .collect::<Result<_, _>>()?,
            )
        }
        "array" => {
            let items = p
                .items
                .as_ref()
                .ok_or_else(|| bad(path, "array type needs \"items\""))?;
            ValueType::Array(Box::new(value_to_spec(items, &alloc::format!("{path}/items"))?))
        }
        other => return Err(bad(path, &alloc::format!("unknown type '{other}'"))),
    };
    if p.enum_values.is_some() && !matches!(value_type, ValueType::Enum(_)) {
        return Err(bad(path, "\"enum\" given for a non-enum type"));
    }
    let range = match (p.minimum, p.maximum) {
        (None, None) => None,
        (Some(min), Some(max)) => Some(Range { min, max }),
        _ => return Err(bad(path, "a range needs both \"minimum\" and \"maximum\"")),
    };
    Ok(ValueSpec {
        value_type,
        description: p.description.to_string(),
        range,
    })
}

fn value_to_spec(v: &RawValue, path: &str) -> Result<ValueSpec, ContractError> {
    to_spec(
        Parts {
            value_type: &v.value_type,
            description: &v.description,
            minimum: v.minimum,
            maximum: v.maximum,
            enum_values: &v.enum_values,
            fields: &v.fields,
            items: &v.items,
        },
        path,
    )
}

fn to_param(p: &RawParam, path: &str) -> Result<ParamSpec, ContractError> {
    let spec = to_spec(
        Parts {
            value_type: &p.value_type,
            description: &p.description,
            minimum: p.minimum,
            maximum: p.maximum,
            enum_values: &p.enum_values,
            fields: &p.fields,
            items: &p.items,
        },
        path,
    )?;
    Ok(ParamSpec {
        name: p.name.clone(),
        spec,
        required: p.required,
    })
}

pub(super) fn parse(text: &str) -> Result<FunctionContract, ContractError> {
    let raw: RawContract = serde_json::from_str(text).map_err(|e| ContractError::Parse(e.to_string()))?;
    let params = raw
        .params
        .iter()
        .map(|p| to_param(p, &alloc::format!("/{}", p.name)))
        .collect::<Result<Vec<_>, _>>()?;
    let ret = value_to_spec(&raw.return_spec, "/results")?;
    FunctionContract::new(raw.name, raw.description, params, ret, raw.task_kind)
}

type RawFields = (
    String,
    Option<f64>,
    Option<f64>,
    Option<Vec<String>>,
    Option<Vec<RawParam>>,
    Option<Box<RawValue>>,
);

fn from_spec(spec: &ValueSpec) -> RawFields {
    let (min, max) = match spec.range {
        Some(r) => (Some(r.min), Some(r.max)),
        None => (None, None),
    };
    let (name, enums, fields, items) = match &spec.value_type {
        ValueType::Boolean => ("boolean", None, None, None),
        ValueType::Integer => ("integer", None, None, None),
        ValueType::Number => ("number", None, None, None),
        ValueType::String => ("string", None, None, None),
        ValueType::Enum(v) => ("enum", Some(v.clone()), None, None),
        ValueType::Object(f) => ("object", None, Some(f.iter().map(from_param).collect()), None),
        ValueType::Array(i) => ("array", None, None, Some(Box::new(from_value(i)))),
    };
    (name.to_string(), min, max, enums, fields, items)
}

fn from_value(spec: &ValueSpec) -> RawValue {
    let (value_type, minimum, maximum, enum_values, fields, items) = from_spec(spec);
    RawValue {
        value_type,
        description: spec.description.clone(),
        minimum,
        maximum,
        enum_values,
        fields,
        items,
    }
}

fn from_param(p: &ParamSpec) -> RawParam {
    let (value_type, minimum, maximum, enum_values, fields, items) = from_spec(&p.spec);
    RawParam {
        name: p.name.clone(),
        value_type,
        description: p.spec.description.clone(),
        required: p.required,
        minimum,
        maximum,
        enum_values,
        fields,
        items,
    }
}

pub(super) fn render(c: &FunctionContract) -> String {
    let raw = RawContract {
        name: c.name.clone(),
        description: c.description.clone(),
        task_kind: c.task_kind,
        params: c.params.iter().map(from_param).collect(),
        return_spec: from_value(&c.return_spec),
    };
    serde_json::to_string_pretty(&raw).expect("contract serialization is infallible")
}

#[cfg(test)]
mod tests {
    use super::*;

    const IRIS: &str = r#"{
        "name": "classify_iris",
        "description": "Classifies an iris flower from its measurements.",
        "task_kind": "classification",
        "params": [
            {"name": "sepalLength", "type": "number", "minimum": 0, "maximum": 10, "description": "cm"},
            {"name": "petalLength", "type": "number", "required": false, "description": "cm"},
            {"name": "meta", "type": "object", "required": false, "fields": [
                {"name": "source", "type": "string"}
            ]}
        ],
        "return": {"type": "enum", "enum": ["Setosa", "Versicolor", "Virginica"]}
    }"#;

    #[test]
    fn parses_and_roundtrips() {
        let c = parse(IRIS).unwrap();
        assert_eq!(c.name(), "classify_iris");
        assert_eq!(c.params().len(), 3);
        assert!(!c.params()[1].required);
        assert_eq!(c.params()[0].spec.range, Some(Range { min: 0.0, max: 10.0 }));
        let again = parse(&render(&c)).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn enum_list_required_for_enum_type() {
        let text = r#"{"name":"f","description":"d","return":{"type":"enum"}}"#;
        assert!(matches!(parse(text), Err(ContractError::Invalid { .. })));
    }

    #[test]
    fn unknown_type_rejected() {
        let text = r#"{"name":"f","description":"d","return":{"type":"date"}}"#;
        assert!(parse(text).is_err());
    }
}

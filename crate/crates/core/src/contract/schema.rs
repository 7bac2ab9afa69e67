use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::ser::{Serialize, SerializeMap, Serializer};
use serde_json::Value;

use super::{FunctionContract, ParamSpec, ValueSpec, ValueType};

/// JSON Schema dialect every generated root document declares.
pub const DIALECT: &str = "https://json-schema.org/draft/2020-12/schema";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaType {
    Boolean,
    Integer,
    Number,
    String,
    Object,
    Array,
}

impl SchemaType {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemaType::Boolean => "boolean",
            SchemaType::Integer => "integer",
            SchemaType::Number => "number",
            SchemaType::String => "string",
            SchemaType::Object => "object",
            SchemaType::Array => "array",
        }
    }
}

/// A schema node. Object properties keep declaration order, so the
/// serialized form is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaDoc {
    pub root: bool,
    pub title: Option<String>,
    pub schema_type: SchemaType,
    pub description: Option<String>,
    pub properties: Vec<(String, SchemaDoc)>,
    pub required: Vec<String>,
    pub items: Option<Box<SchemaDoc>>,
    pub enum_values: Option<Vec<String>>,
    pub minimum: Option<f64>,
    pub maximum: Option<f64>,
}

impl SchemaDoc {
    fn node(schema_type: SchemaType) -> Self {
        Self {
            root: false,
            title: None,
            schema_type,
            description: None,
            properties: Vec::new(),
            required: Vec::new(),
            items: None,
            enum_values: None,
            minimum: None,
            maximum: None,
        }
    }

    pub fn property(&self, name: &str) -> Option<&SchemaDoc> {
        self.properties.iter().find(|(k, _)| k == name).map(|(_, v)| v)
    }

    /// True when every object node lists all of its properties as required.
    pub fn fully_required(&self) -> bool {
        let here =
            self.schema_type != SchemaType::Object || self.properties.iter().all(|(k, _)| self.required.contains(k));
        here && self.properties.iter().all(|(_, v)| v.fully_required())
            && self.items.as_ref().is_none_or(|i| i.fully_required())
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("schema serialization is infallible")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("schema serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serialization is infallible")
    }
}

struct OrderedProperties<'a>(&'a [(String, SchemaDoc)]);

impl Serialize for OrderedProperties<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// Integral bounds render without a fractional part.
fn bound(v: f64) -> Value {
    if libm::trunc(v) == v && libm::fabs(v) < 9.0e15 {
        Value::from(v as i64)
    } else {
        Value::from(v)
    }
}

impl Serialize for SchemaDoc {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        if self.root {
            map.serialize_entry("$schema", DIALECT)?;
        }
        if let Some(title) = &self.title {
            map.serialize_entry("title", title)?;
        }
        map.serialize_entry("type", self.schema_type.as_str())?;
        if let Some(d) = &self.description {
            map.serialize_entry("description", d)?;
        }
        if self.schema_type == SchemaType::Object {
            map.serialize_entry("properties", &OrderedProperties(&self.properties))?;
            map.serialize_entry("required", &self.required)?;
            map.serialize_entry("additionalProperties", &false)?;
        }
        if let Some(items) = &self.items {
            map.serialize_entry("items", items)?;
        }
        if let Some(values) = &self.enum_values {
            map.serialize_entry("enum", values)?;
        }
        if let Some(min) = self.minimum {
            map.serialize_entry("minimum", &bound(min))?;
        }
        if let Some(max) = self.maximum {
            map.serialize_entry("maximum", &bound(max))?;
        }
        map.end()
    }
}

fn non_empty(text: &str) -> Option<String> {
    let t = text.trim();
    (!t.is_empty()).then(|| t.to_string())
}

pub(crate) fn value_schema(spec: &ValueSpec) -> SchemaDoc {
    let mut node = match &spec.value_type {
        ValueType::Boolean => SchemaDoc::node(SchemaType::Boolean),
        ValueType::Integer => SchemaDoc::node(SchemaType::Integer),
        ValueType::Number => SchemaDoc::node(SchemaType::Number),
        ValueType::String => SchemaDoc::node(SchemaType::String),
        ValueType::Enum(values) => {
            let mut n = SchemaDoc::node(SchemaType::String);
            n.enum_values = Some(values.clone());
            n
        }
        ValueType::Object(fields) => object_schema(fields),
        ValueType::Array(items) => {
            let mut n = SchemaDoc::node(SchemaType::Array);
            n.items = Some(Box::new(value_schema(items)));
            n
        }
    };
    node.description = non_empty(&spec.description);
    if let Some(range) = spec.range {
        node.minimum = Some(range.min);
        node.maximum = Some(range.max);
    }
    node
}

fn object_schema(fields: &[ParamSpec]) -> SchemaDoc {
    let mut node = SchemaDoc::node(SchemaType::Object);
    for p in fields {
        node.properties.push((p.name.clone(), value_schema(&p.spec)));
        if p.required {
            node.required.push(p.name.clone());
        }
    }
    node
}

/// Object schema with one property per declared parameter.
pub fn build_parameter_schema(contract: &FunctionContract) -> SchemaDoc {
    let mut schema = object_schema(contract.params());
    schema.root = true;
    schema.title = Some(alloc::format!("{}.parameters", contract.name()));
    schema.description = non_empty(contract.description());
    schema
}

/// Object schema requiring `remarks` (reasoning) followed by `results`.
pub fn build_response_schema(contract: &FunctionContract) -> SchemaDoc {
    let mut schema = SchemaDoc::node(SchemaType::Object);
    schema.root = true;
    schema.title = Some(alloc::format!("{}.response", contract.name()));
    let mut remarks = SchemaDoc::node(SchemaType::String);
    remarks.description = Some("Reasoning that leads to the results.".to_string());
    let mut results = value_schema(contract.return_spec());
    if results.description.is_none() {
        results.description = Some("Return value of the function.".to_string());
    }
    schema.properties.push(("remarks".to_string(), remarks));
    schema.properties.push(("results".to_string(), results));
    schema.required = alloc::vec!["remarks".to_string(), "results".to_string()];
    schema
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{ParamSpec, TaskKind};
    use alloc::vec;

    fn contract(params: Vec<ParamSpec>, ret: ValueSpec) -> FunctionContract {
        FunctionContract::new("f", "doc", params, ret, TaskKind::Generic).unwrap()
    }

    #[test]
    fn empty_params_give_empty_object() {
        let s = build_parameter_schema(&contract(vec![], ValueSpec::new(ValueType::Boolean)));
        let v = s.to_value();
        assert_eq!(v["properties"], serde_json::json!({}));
        assert_eq!(v["required"], serde_json::json!([]));
        assert_eq!(v["$schema"], DIALECT);
    }

    #[test]
    fn ranges_and_enums_render() {
        let c = contract(
            vec![
                ParamSpec::new(
                    "sex",
                    ValueSpec::new(ValueType::Enum(vec!["male".into(), "female".into()])),
                ),
                ParamSpec::new("age", ValueSpec::new(ValueType::Number).with_range(0.0, 120.0)).optional(),
            ],
            ValueSpec::new(ValueType::Boolean),
        );
        let text = build_parameter_schema(&c).to_json_string();
        assert!(
            text.contains(r#""sex":{"type":"string","enum":["male","female"]}"#),
            "{text}"
        );
        assert!(
            text.contains(r#""age":{"type":"number","minimum":0,"maximum":120}"#),
            "{text}"
        );
        assert!(text.contains(r#""required":["sex"]"#));
    }

    #[test]
    fn response_schema_orders_remarks_first() {
        let c = contract(vec![], ValueSpec::new(ValueType::Boolean));
        let text = build_response_schema(&c).to_json_string();
        let r = text.find("\"remarks\":").unwrap();
        let s = text.find("\"results\":").unwrap();
        assert!(r < s);
        assert!(text.contains(r#""required":["remarks","results"]"#));
    }

    #[test]
    fn deterministic_serialization() {
        let c = contract(
            vec![ParamSpec::new(
                "x",
                ValueSpec::new(ValueType::Integer).described("an x"),
            )],
            ValueSpec::new(ValueType::Number).with_range(-1.5, 2.5),
        );
        assert_eq!(
            build_response_schema(&c).to_json_string(),
            build_response_schema(&c.clone()).to_json_string()
        );
        assert_eq!(
            build_parameter_schema(&c).to_json_string(),
            build_parameter_schema(&c).to_json_string()
        );
    }
}

//! Function contracts: the declared signature and documentation a model
//! role-plays, plus the JSON schemas derived from them.

mod args;
mod file;
mod schema;
mod validate;

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

pub use args::render_arguments;
pub use schema::{build_parameter_schema, build_response_schema, SchemaDoc, SchemaType, DIALECT};
pub use validate::{validate, validate_response, Validation, Violation};

use crate::error::ContractError;

/// What kind of answer a contract produces; drives correctness checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
    #[default]
    Generic,
}

/// Inclusive numeric bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValueType {
    Boolean,
    Integer,
    Number,
    String,
    /// String enumeration; carries the permitted values.
    Enum(Vec<String>),
    /// Nested object with ordered fields.
    Object(Vec<ParamSpec>),
    Array(Box<ValueSpec>),
}

impl ValueType {
    pub fn is_numeric(&self) -> bool {
        matches!(self, ValueType::Integer | ValueType::Number)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSpec {
    pub value_type: ValueType,
    pub description: String,
    pub range: Option<Range>,
}

impl ValueSpec {
    pub fn new(value_type: ValueType) -> Self {
        Self {
            value_type,
            description: String::new(),
            range: None,
        }
    }

    pub fn described(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn with_range(mut self, min: f64, max: f64) -> Self {
        self.range = Some(Range { min, max });
        self
    }

    fn check(&self, path: &str) -> Result<(), ContractError> {
        if let Some(range) = self.range {
            if !self.value_type.is_numeric() {
                return Err(ContractError::invalid(path, "range given for a non-numeric type"));
            }
            if !(range.min.is_finite() && range.max.is_finite()) || range.min > range.max {
                return Err(ContractError::invalid(path, "range requires finite min <= max"));
            }
        }
        match &self.value_type {
            ValueType::Enum(values) => {
                if values.is_empty() {
                    return Err(ContractError::invalid(path, "enum requires at least one value"));
                }
                for (i, v) in values.iter().enumerate() {
                    if values[..i].contains(v) {
                        return Err(ContractError::invalid(path, "duplicate enum value"));
                    }
                }
                Ok(())
            }
            ValueType::Object(fields) => check_params(fields, path),
            ValueType::Array(items) => items.check(&alloc::format!("{path}/items")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub spec: ValueSpec,
    pub required: bool,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, spec: ValueSpec) -> Self {
        Self {
            name: name.into(),
            spec,
            required: true,
        }
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }
}

fn check_params(params: &[ParamSpec], path: &str) -> Result<(), ContractError> {
    for (i, p) in params.iter().enumerate() {
        let at = alloc::format!("{path}/{}", p.name);
        if p.name.is_empty() {
            return Err(ContractError::invalid(path, "parameter name is empty"));
        }
        if params[..i].iter().any(|q| q.name == p.name) {
            return Err(ContractError::invalid(&at, "duplicate parameter name"));
        }
        p.spec.check(&at)?;
    }
    Ok(())
}

/// A validated function declaration.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionContract {
    name: String,
    description: String,
    params: Vec<ParamSpec>,
    return_spec: ValueSpec,
    task_kind: TaskKind,
}

impl FunctionContract {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        params: Vec<ParamSpec>,
        return_spec: ValueSpec,
        task_kind: TaskKind,
    ) -> Result<Self, ContractError> {
        let contract = Self {
            name: name.into(),
            description: description.into(),
            params,
            return_spec,
            task_kind,
        };
        contract.check()?;
        Ok(contract)
    }

    fn check(&self) -> Result<(), ContractError> {
        let name_ok = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if !name_ok {
            return Err(ContractError::invalid(
                "",
                "function name must be a non-empty identifier",
            ));
        }
        check_params(&self.params, "")?;
        if self.description.trim().is_empty() && self.params.iter().any(|p| p.spec.description.trim().is_empty()) {
            return Err(ContractError::invalid(
                "",
                "an empty function description requires every parameter to be described",
            ));
        }
        self.return_spec.check("/results")
    }

    /// Parses the declarative JSON form.
    pub fn from_json_str(text: &str) -> Result<Self, ContractError> {
        file::parse(text)
    }

    pub fn to_json_string(&self) -> String {
        file::render(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn return_spec(&self) -> &ValueSpec {
        &self.return_spec
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }
}

impl core::fmt::Display for FunctionContract {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let params: Vec<String> = self.params.iter().map(|p| p.name.to_string()).collect();
        write!(f, "{}({})", self.name, params.join(", "))
    }
}

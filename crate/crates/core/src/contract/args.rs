use alloc::string::String;

use serde_json::Value;

use super::{build_parameter_schema, validate, FunctionContract, ParamSpec, ValueSpec, ValueType};
use crate::error::ContractError;

/// Renders an argument document as canonical JSON text: keys follow
/// declaration order, absent optional fields stay absent.
pub fn render_arguments(contract: &FunctionContract, args: &Value) -> Result<String, ContractError> {
    let report = validate(&build_parameter_schema(contract), args);
    if let Some(first) = report.violations.into_iter().next() {
        return Err(ContractError::Violation {
            path: first.path,
            reason: first.reason,
        });
    }
    let mut out = String::new();
    write_object(contract.params(), args, &mut out);
    Ok(out)
}

fn write_object(fields: &[ParamSpec], value: &Value, out: &mut String) {
    let Value::Object(map) = value else {
        write_plain(value, out);
        return;
    };
    out.push('{');
    let mut first = true;
    for field in fields {
        if let Some(v) = map.get(&field.name) {
            if !first {
                out.push(',');
            }
            first = false;
            write_plain(&Value::String(field.name.clone()), out);
            out.push(':');
            write_spec(&field.spec, v, out);
        }
    }
    out.push('}');
}

fn write_spec(spec: &ValueSpec, value: &Value, out: &mut String) {
    match (&spec.value_type, value) {
        (ValueType::Object(fields), Value::Object(_)) => write_object(fields, value, out),
        (ValueType::Array(items), Value::Array(values)) => {
            out.push('[');
            for (i, v) in values.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_spec(items, v, out);
            }
            out.push(']');
        }
        _ => write_plain(value, out),
    }
}

fn write_plain(value: &Value, out: &mut String) {
    out.push_str(&serde_json::to_string(value).expect("JSON values always serialize"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::TaskKind;
    use alloc::vec;
    use serde_json::json;

    fn titanic() -> FunctionContract {
        FunctionContract::new(
            "predict_survival",
            "Predicts whether a passenger survived.",
            vec![
                ParamSpec::new("pclass", ValueSpec::new(ValueType::Integer).with_range(1.0, 3.0)),
                ParamSpec::new(
                    "sex",
                    ValueSpec::new(ValueType::Enum(vec!["male".into(), "female".into()])),
                ),
                ParamSpec::new("age", ValueSpec::new(ValueType::Number)).optional(),
            ],
            ValueSpec::new(ValueType::Boolean),
            TaskKind::Classification,
        )
        .unwrap()
    }

    #[test]
    fn declaration_order() {
        // serde_json maps are sorted; output must not be
        let text = render_arguments(&titanic(), &json!({"sex":"male","age":22.5,"pclass":3})).unwrap();
        assert_eq!(text, r#"{"pclass":3,"sex":"male","age":22.5}"#);
    }

    #[test]
    fn absent_optional_omitted() {
        let text = render_arguments(&titanic(), &json!({"sex":"female","pclass":1})).unwrap();
        assert_eq!(text, r#"{"pclass":1,"sex":"female"}"#);
    }

    #[test]
    fn extra_key_rejected() {
        let err = render_arguments(&titanic(), &json!({"sex":"female","pclass":1,"cabin":"C85"})).unwrap_err();
        assert!(
            matches!(err, ContractError::Violation { ref path, .. } if path == "/cabin"),
            "{err:?}"
        );
    }
}

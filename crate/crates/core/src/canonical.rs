use alloc::string::String;

use serde_json::Value;

/// Integral floats become integers; maps keep their sorted order.
pub fn normalize(v: &Value) -> Value {
    match v {
        Value::Number(n) if !n.is_i64() && !n.is_u64() => match n.as_f64() {
            Some(f) if libm::trunc(f) == f && libm::fabs(f) < 9.0e15 => Value::from(f as i64),
            _ => v.clone(),
        },
        Value::Array(items) => Value::Array(items.iter().map(normalize).collect()),
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), normalize(v))).collect()),
        other => other.clone(),
    }
}

/// Canonical JSON text used for exact-match comparisons.
pub fn canonical_json(v: &Value) -> String {
    serde_json::to_string(&normalize(v)).expect("JSON values always serialize")
}

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::sample::select;
use serde_json::{json, Map, Value};

use mockfn_core::contract::{FunctionContract, ParamSpec, TaskKind, ValueSpec, ValueType};

const NAMES: [&str; 6] = ["age", "fare", "sex", "odor", "tags", "cabin"];

fn range(numeric: bool) -> BoxedStrategy<Option<(f64, f64)>> {
    if !numeric {
        return Just(None).boxed();
    }
    prop_oneof![
        2 => Just(None),
        1 => (-50i32..50, 0i32..60).prop_map(|(lo, w)| Some((lo as f64, (lo + w) as f64))),
        1 => (-5.0f64..5.0, 0.0f64..10.0).prop_map(|(lo, w)| Some((lo, lo + w))),
    ]
    .boxed()
}

fn leaf_type() -> impl Strategy<Value = ValueType> {
    prop_oneof![
        Just(ValueType::Boolean),
        Just(ValueType::Integer),
        Just(ValueType::Number),
        Just(ValueType::String),
        proptest::sample::subsequence(vec!["Lived", "Died", "Setosa", "x y"], 1..4)
            .prop_map(|v| ValueType::Enum(v.into_iter().map(String::from).collect())),
    ]
}

fn spec_from(t: ValueType) -> BoxedStrategy<ValueSpec> {
    let numeric = t.is_numeric();
    range(numeric)
        .prop_map(move |r| {
            let s = ValueSpec::new(t.clone()).described("a value");
            match r {
                Some((lo, hi)) => s.with_range(lo, hi),
                None => s,
            }
        })
        .boxed()
}

pub fn value_spec(depth: u32) -> BoxedStrategy<ValueSpec> {
    let leaf = leaf_type().prop_flat_map(spec_from).boxed();
    if depth == 0 {
        return leaf;
    }
    prop_oneof![
        4 => leaf,
        1 => value_spec(depth - 1).prop_map(|s| ValueSpec::new(ValueType::Array(Box::new(s))).described("a list")),
        1 => params(depth - 1, 3).prop_map(|p| ValueSpec::new(ValueType::Object(p)).described("a record")),
    ]
    .boxed()
}

pub fn params(depth: u32, max: usize) -> BoxedStrategy<Vec<ParamSpec>> {
    proptest::collection::vec((value_spec(depth), any::<bool>()), 1..=max)
        .prop_map(|specs| {
            specs
                .into_iter()
                .enumerate()
                .map(|(i, (s, required))| {
                    let p = ParamSpec::new(NAMES[i], s);
                    if required {
                        p
                    } else {
                        p.optional()
                    }
                })
                .collect()
        })
        .boxed()
}

pub fn contract() -> BoxedStrategy<FunctionContract> {
    (params(2, 5), value_spec(2))
        .prop_map(|(p, r)| FunctionContract::new("mock_fn", "Does something.", p, r, TaskKind::Generic).unwrap())
        .boxed()
}

fn junk() -> BoxedStrategy<Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::from),
        (-100i64..100).prop_map(Value::from),
        (-100.0f64..100.0).prop_map(|f| json!(f)),
        Just(json!(3.0)),
        "[a-z]{0,4}".prop_map(Value::from),
        Just(json!([])),
        Just(json!({"extra": 1})),
    ]
    .boxed()
}

fn valid_number(spec: &ValueSpec, integer: bool) -> BoxedStrategy<Value> {
    let (lo, hi) = spec.range.map(|r| (r.min, r.max)).unwrap_or((-1000.0, 1000.0));
    if integer {
        let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
        if a > b {
            return junk();
        }
        prop_oneof![(a..=b).prop_map(Value::from), (a - 3..=b + 3).prop_map(Value::from)].boxed()
    } else {
        prop_oneof![
            3 => (lo..=hi).prop_map(|f| json!(f)),
            1 => (lo - 2.0..=hi + 2.0).prop_map(|f| json!(f)),
            1 => Just(json!(lo)),
            1 => Just(json!(hi)),
        ]
        .boxed()
    }
}

pub fn object_doc(params: &[ParamSpec]) -> BoxedStrategy<Value> {
    let fields: Vec<BoxedStrategy<(String, Option<Value>)>> = params
        .iter()
        .map(|p| {
            let name = p.name.clone();
            let present = if p.required {
                prop_oneof![15 => Just(true), 1 => Just(false)].boxed()
            } else {
                any::<bool>().boxed()
            };
            (present, document(&p.spec))
                .prop_map(move |(keep, v)| (name.clone(), keep.then_some(v)))
                .boxed()
        })
        .collect();
    (fields, prop_oneof![12 => Just(false), 1 => Just(true)])
        .prop_map(|(fields, extra)| {
            let mut m = Map::new();
            for (k, v) in fields {
                if let Some(v) = v {
                    m.insert(k, v);
                }
            }
            if extra {
                m.insert("unexpected".into(), json!(true));
            }
            Value::Object(m)
        })
        .boxed()
}

/// Documents that mostly conform to `spec`, with occasional defects.
pub fn document(spec: &ValueSpec) -> BoxedStrategy<Value> {
    let valid = match &spec.value_type {
        ValueType::Boolean => any::<bool>().prop_map(Value::from).boxed(),
        ValueType::Integer => valid_number(spec, true),
        ValueType::Number => valid_number(spec, false),
        ValueType::String => "[a-zA-Z ]{0,6}".prop_map(Value::from).boxed(),
        ValueType::Enum(values) => {
            let vals: Vec<Value> = values.iter().cloned().map(Value::from).collect();
            prop_oneof![6 => select(vals), 1 => Just(json!("Maybe"))].boxed()
        }
        ValueType::Object(params) => object_doc(params),
        ValueType::Array(item) => proptest::collection::vec(document(item), 0..4)
            .prop_map(Value::from)
            .boxed(),
    };
    prop_oneof![10 => valid, 1 => junk()].boxed()
}

pub fn sample<T: std::fmt::Debug>(s: &BoxedStrategy<T>, runner: &mut proptest::test_runner::TestRunner) -> T {
    s.new_tree(runner).expect("strategy generates").current()
}

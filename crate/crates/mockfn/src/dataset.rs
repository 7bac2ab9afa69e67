//! CSV datasets mapped onto a contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use mockfn_core::contract::{FunctionContract, ValueSpec, ValueType};
use mockfn_core::trainer::Example;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: csv::Error },
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("unknown parameter '{0}'")]
    UnknownParam(String),
    #[error("label column '{0}' is also a feature")]
    LabelIsFeature(String),
    #[error("train fraction must be in (0, 1), got {0}")]
    Fraction(f64),
    #[error("row {row}, column '{column}': cannot read {cell:?} as {expected}")]
    Cell {
        row: usize,
        column: String,
        cell: String,
        expected: &'static str,
    },
    #[error("row {row}: label column '{column}' is empty")]
    MissingLabel { row: usize, column: String },
}

fn default_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    /// Column name to parameter name. When absent, every parameter reads
    /// the column of the same name.
    #[serde(default)]
    pub features: Option<BTreeMap<String, String>>,
    pub label: String,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Keep at most this many evaluation rows.
    #[serde(default)]
    pub eval_limit: Option<usize>,
    /// Keep at most this many training rows.
    #[serde(default)]
    pub train_limit: Option<usize>,
}

impl DatasetSpec {
    pub fn resolve(&mut self, base: &Path) {
        if self.path.is_relative() {
            self.path = base.join(&self.path);
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "t" | "y" => Some(true),
        "false" | "no" | "0" | "f" | "n" => Some(false),
        _ => None,
    }
}

/// Types one cell per the parameter's declared type.
pub fn parse_cell(spec: &ValueSpec, cell: &str) -> Result<Value, &'static str> {
    match &spec.value_type {
        ValueType::Boolean => parse_bool(cell).map(Value::from).ok_or("boolean"),
        ValueType::Integer => cell
            .parse::<i64>()
            .ok()
            .or_else(|| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|f| f.fract() == 0.0 && f.abs() < 9.0e15)
                    .map(|f| f as i64)
            })
            .map(Value::from)
            .ok_or("integer"),
        ValueType::Number => cell
            .parse::<f64>()
            .ok()
            .filter(|f| f.is_finite())
            .map(|f| serde_json::json!(f))
            .ok_or("number"),
        ValueType::String | ValueType::Enum(_) => Ok(Value::String(cell.to_owned())),
        ValueType::Object(_) | ValueType::Array(_) => serde_json::from_str(cell).map_err(|_| "JSON"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Example>,
    pub eval: Vec<Example>,
}

/// Reads all rows in file order.
pub fn read_rows(spec: &DatasetSpec, contract: &FunctionContract) -> Result<Vec<Example>, DatasetError> {
    let io = |source| DatasetError::Io {
        path: spec.path.clone(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&spec.path)
        .map_err(io)?;
    let headers = reader.headers().map_err(io)?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::UnknownColumn(name.into()))
    };

    let mapping: Vec<(String, String)> = match &spec.features {
        Some(m) => m.iter().map(|(c, p)| (c.clone(), p.clone())).collect(),
        None => contract
            .params()
            .iter()
            .map(|p| (p.name.clone(), p.name.clone()))
            .collect(),
    };
    let mut features = Vec::new();
    for (col, param) in &mapping {
        if *col == spec.label {
            return Err(DatasetError::LabelIsFeature(col.clone()));
        }
        let p = contract
            .param(param)
            .ok_or_else(|| DatasetError::UnknownParam(param.clone()))?;
        features.push((column(col)?, col.clone(), p));
    }
    let label_at = column(&spec.label)?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(io)?;
        let row = i + 1;
        let mut args = Map::new();
        for (at, col, p) in &features {
            let cell = record.get(*at).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v = parse_cell(&p.spec, cell).map_err(|expected| DatasetError::Cell {
                row,
                column: col.clone(),
                cell: cell.into(),
                expected,
            })?;
            args.insert(p.name.clone(), v);
        }
        let cell = record.get(label_at).unwrap_or("");
        if cell.is_empty() {
            return Err(DatasetError::MissingLabel {
                row,
                column: spec.label.clone(),
            });
        }
        let truth = parse_cell(contract.return_spec(), cell).map_err(|expected| DatasetError::Cell {
            row,
            column: spec.label.clone(),
            cell: cell.into(),
            expected,
        })?;
        rows.push(Example {
            arguments: Value::Object(args),
            truth,
        });
    }
    Ok(rows)
}

/// Loads and splits the dataset. The split depends only on the row count
/// and the seed.
pub fn load_dataset(spec: &DatasetSpec, contract: &FunctionContract) -> Result<Split, DatasetError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DatasetError::Fraction(spec.train_fraction));
    }
    let rows = read_rows(spec, contract)?;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let n_train = (rows.len() as f64 * spec.train_fraction).round() as usize;
    let pick = |idx: &[usize], limit: Option<usize>| -> Vec<Example> {
        idx.iter()
            .take(limit.unwrap_or(usize::MAX))
            .map(|&i| rows[i].clone())
            .collect()
    };
    Ok(Split {
        train: pick(&order[..n_train], spec.train_limit),
        eval: pick(&order[n_train..], spec.eval_limit),
    })
}

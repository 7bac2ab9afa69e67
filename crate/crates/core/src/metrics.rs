//! Accuracy, error and formal-correctness metrics.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::canonical_json;

/// Metrics over one evaluation. Absent fields had no data to summarize.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_evaluated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub medae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formal_correctness_ratio: Option<f64>,
}

/// Sum of a sorted copy, so the result does not depend on input order.
fn stable_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.into_iter().sum()
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    })
}

/// `pairs` holds `(prediction, truth)`; a missing prediction is a miss and
/// is left out of the error metrics. `first_try_valid` has one flag per
/// response.
pub fn compute_metrics(pairs: &[(Option<Value>, Value)], first_try_valid: &[bool]) -> MetricsReport {
    let n = pairs.len();
    let accuracy = (n > 0).then(|| {
        let hits = pairs
            .iter()
            .filter(|(p, t)| p.as_ref().is_some_and(|p| canonical_json(p) == canonical_json(t)))
            .count();
        hits as f64 / n as f64
    });
    let errors: Vec<f64> = pairs
        .iter()
        .filter_map(|(p, t)| Some(p.as_ref()?.as_f64()? - t.as_f64()?))
        .collect();
    let (rmse, medae) = if errors.is_empty() {
        (None, None)
    } else {
        let mse = stable_sum(errors.iter().map(|e| e * e).collect()) / errors.len() as f64;
        (
            Some(libm::sqrt(mse)),
            median(errors.iter().map(|e| libm::fabs(*e)).collect()),
        )
    };
    let formal_correctness_ratio = (!first_try_valid.is_empty())
        .then(|| first_try_valid.iter().filter(|v| **v).count() as f64 / first_try_valid.len() as f64);
    MetricsReport {
        n_evaluated: n,
        accuracy,
        rmse,
        medae,
        formal_correctness_ratio,
    }
}

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{BackendProfile, TokenUsage, UsageCategory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryCost {
    pub category: UsageCategory,
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub categories: Vec<CategoryCost>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
    pub total_cost: f64,
}

impl CostBreakdown {
    pub fn category(&self, category: UsageCategory) -> &CategoryCost {
        self.categories
            .iter()
            .find(|c| c.category == category)
            .expect("every category is reported")
    }
}

/// Sums usage per category and prices it with the profile's per-million
/// token rates.
pub fn cost_report(usages: &[TokenUsage], profile: &BackendProfile) -> CostBreakdown {
    let categories: Vec<CategoryCost> = UsageCategory::ALL
        .iter()
        .map(|&category| {
            let mut c = CategoryCost {
                category,
                calls: 0,
                prompt_tokens: 0,
                completion_tokens: 0,
                total_tokens: 0,
                cost: 0.0,
            };
            for u in usages.iter().filter(|u| u.category == category) {
                c.calls += 1;
                c.prompt_tokens += u.prompt_tokens;
                c.completion_tokens += u.completion_tokens;
            }
            c.total_tokens = c.prompt_tokens + c.completion_tokens;
            c.cost = c.prompt_tokens as f64 * profile.input_price_per_million / 1e6
                + c.completion_tokens as f64 * profile.output_price_per_million / 1e6;
            c
        })
        .collect();
    CostBreakdown {
        prompt_tokens: categories.iter().map(|c| c.prompt_tokens).sum(),
        completion_tokens: categories.iter().map(|c| c.completion_tokens).sum(),
        total_tokens: categories.iter().map(|c| c.total_tokens).sum(),
        total_cost: categories.iter().map(|c| c.cost).sum(),
        categories,
    }
}

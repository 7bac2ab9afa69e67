//! Chat-completion transport abstraction and usage accounting.

mod cost;
mod stub;

use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

pub use cost::{cost_report, CategoryCost, CostBreakdown};
pub use stub::{Matcher, StubBackend, StubCall, StubReply};

use crate::contract::SchemaDoc;
use crate::error::BackendError;
use crate::memory::{ChatMessage, Role};

/// Which part of the workflow spent the tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsageCategory {
    Invocation,
    Reflection,
    Compression,
    ScriptGeneration,
}

impl UsageCategory {
    pub const ALL: [UsageCategory; 4] = [
        UsageCategory::Invocation,
        UsageCategory::Reflection,
        UsageCategory::Compression,
        UsageCategory::ScriptGeneration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UsageCategory::Invocation => "invocation",
            UsageCategory::Reflection => "reflection",
            UsageCategory::Compression => "compression",
            UsageCategory::ScriptGeneration => "script_generation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub category: UsageCategory,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    messages: Vec<ChatMessage>,
    response_schema: Option<SchemaDoc>,
    pub model_id: String,
    pub temperature: f64,
    /// Assigned by the caller; copied into the response usage.
    pub category: UsageCategory,
}

impl ChatRequest {
    pub fn new(
        messages: Vec<ChatMessage>,
        response_schema: Option<SchemaDoc>,
        model_id: impl Into<String>,
        temperature: f64,
        category: UsageCategory,
    ) -> Result<Self, BackendError> {
        match messages.first() {
            None => return Err(BackendError::InvalidRequest("message list is empty".into())),
            Some(m) if m.role != Role::System => {
                return Err(BackendError::InvalidRequest(
                    "first message must be a system message".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            messages,
            response_schema,
            model_id: model_id.into(),
            temperature,
            category,
        })
    }

    /// Builds a request for `profile`, attaching the schema only when the
    /// profile supports structured output.
    pub fn for_profile(
        profile: &BackendProfile,
        messages: Vec<ChatMessage>,
        schema: Option<&SchemaDoc>,
        category: UsageCategory,
    ) -> Result<Self, BackendError> {
        let schema = schema.filter(|_| profile.supports_structured_output).cloned();
        Self::new(
            messages,
            schema,
            profile.model_id.clone(),
            profile.temperature,
            category,
        )
    }

    pub fn messages(&self) -> &[ChatMessage] {
        &self.messages
    }

    pub fn response_schema(&self) -> Option<&SchemaDoc> {
        self.response_schema.as_ref()
    }

    pub fn last_content(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub content: String,
    pub usage: TokenUsage,
    pub latency: Duration,
    /// Transport retries spent before this response arrived.
    pub retries: u32,
}

fn default_temperature() -> f64 {
    0.0
}

/// Endpoint, model and pricing for one configured model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendProfile {
    #[serde(default)]
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: String,
    pub model_id: String,
    #[serde(default)]
    pub supports_structured_output: bool,
    #[serde(default)]
    pub input_price_per_million: f64,
    #[serde(default)]
    pub output_price_per_million: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

impl BackendProfile {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            base_url: String::new(),
            api_key_env: String::new(),
            model_id: model_id.into(),
            supports_structured_output: false,
            input_price_per_million: 0.0,
            output_price_per_million: 0.0,
            temperature: 0.0,
        }
    }

    pub fn with_prices(mut self, input: f64, output: f64) -> Self {
        self.input_price_per_million = input;
        self.output_price_per_million = output;
        self
    }

    pub fn structured(mut self, on: bool) -> Self {
        self.supports_structured_output = on;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let price_ok = |p: f64| p.is_finite() && p >= 0.0;
        if !price_ok(self.input_price_per_million) || !price_ok(self.output_price_per_million) {
            return Err(BackendError::InvalidRequest("prices must be non-negative".into()));
        }
        Ok(())
    }
}

/// A stateless chat-completion endpoint. Every call carries the whole
/// conversation.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, profile: &BackendProfile, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for alloc::sync::Arc<B> {
    fn complete(&self, profile: &BackendProfile, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(profile, request)
    }
}

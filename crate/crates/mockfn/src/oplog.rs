//! JSON-lines operation log: one record per backend call.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mockfn_core::backend::{ChatRequest, Matcher, StubBackend, StubReply, TokenUsage, UsageCategory};
use mockfn_core::contract::{SchemaDoc, Violation};
use mockfn_core::error::BackendError;
use mockfn_core::memory::{ChatMessage, InvocationId, Role};
use mockfn_core::mockfn::CallRecord;
use mockfn_core::runtime::{Runtime, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedRequest {
    pub model: String,
    pub temperature: f64,
    pub messages: Vec<LoggedMessage>,
    /// The response schema as sent, when the provider enforces it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_schema: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationLogRecord {
    pub id: InvocationId,
    pub timestamp: Timestamp,
    pub kind: UsageCategory,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<usize>,
    pub request: LoggedRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remarks: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<u64>,
    #[serde(default)]
    pub retries: u32,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("log I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("record {0}: {1}")]
    Request(InvocationId, BackendError),
    #[error("record {0}: response schema is not one of the known schemas")]
    UnknownSchema(InvocationId),
}

/// Extra facts about a call known only to the caller.
#[derive(Debug, Clone, Default)]
pub struct CallContext {
    pub phase: Option<Phase>,
    pub entry: Option<usize>,
    pub ground_truth: Option<Value>,
    pub correct: Option<bool>,
}

impl OperationLogRecord {
    /// Successful invocation calls reuse the invocation id; every other
    /// call draws a fresh id from `runtime`.
    pub fn from_call(call: &CallRecord, ctx: &CallContext, runtime: &dyn Runtime) -> Self {
        let request = call.request.clone();
        let (response, error, usage, latency_ms, retries) = match &call.result {
            Ok(r) => (
                Some(r.content.clone()),
                None,
                Some(r.usage),
                Some(r.latency.as_millis() as u64),
                r.retries,
            ),
            Err(e) => (None, Some(e.to_string()), None, None, 0),
        };
        let accepted = call.invocation_id.is_some();
        Self {
            id: call.invocation_id.unwrap_or_else(|| runtime.next_id()),
            timestamp: call.started_at,
            kind: call.category,
            phase: ctx.phase.unwrap_or(Phase::Train),
            entry: ctx.entry,
            request: LoggedRequest {
                model: request.model_id.clone(),
                temperature: request.temperature,
                messages: request
                    .messages()
                    .iter()
                    .map(|m| LoggedMessage {
                        role: m.role,
                        content: m.content.clone(),
                    })
                    .collect(),
                response_schema: request.response_schema().map(SchemaDoc::to_json_string),
            },
            response,
            error,
            remarks: call.parsed.as_ref().map(|p| p.0.clone()),
            results: call.parsed.as_ref().map(|p| p.1.clone()),
            violations: call.violations.clone(),
            ground_truth: if accepted { ctx.ground_truth.clone() } else { None },
            correct: if accepted { ctx.correct } else { None },
            usage,
            latency_ms,
            retries,
        }
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.request
            .messages
            .iter()
            .map(|m| ChatMessage::new(m.role, m.content.clone()))
            .collect()
    }

    /// Rebuilds the request; a logged schema must be one of `known`.
    pub fn to_request(&self, known: &[&SchemaDoc]) -> Result<ChatRequest, LogError> {
        let schema = match &self.request.response_schema {
            None => None,
            Some(text) => Some(
                known
                    .iter()
                    .find(|s| s.to_json_string() == *text)
                    .map(|s| (*s).clone())
                    .ok_or(LogError::UnknownSchema(self.id))?,
            ),
        };
        ChatRequest::new(
            self.messages(),
            schema,
            self.request.model.clone(),
            self.request.temperature,
            self.kind,
        )
        .map_err(|e| LogError::Request(self.id, e))
    }
}

pub fn write_log(mut out: impl Write, records: &[OperationLogRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_log(input: impl BufRead) -> Result<Vec<OperationLogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

/// A stub that answers each logged request with its logged reply.
pub fn replay_backend(records: &[OperationLogRecord]) -> Option<StubBackend> {
    let script = records
        .iter()
        .map(|r| {
            let reply = match (&r.response, &r.error) {
                (Some(text), _) => StubReply::Text(text.clone()),
                (None, e) => StubReply::Fail(BackendError::Scripted(e.clone().unwrap_or_default())),
            };
            (Matcher::transcript(&r.messages()), reply)
        })
        .collect();
    StubBackend::new(script).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mockfn_core::backend::{BackendProfile, ChatBackend, ChatResponse};
    use mockfn_core::runtime::LogicalRuntime;
    use serde_json::json;
    use std::time::Duration;

    fn call(ok: bool) -> CallRecord {
        let request = ChatRequest::new(
            vec![ChatMessage::system("sys"), ChatMessage::user("{\"a\":1}")],
            None,
            "m",
            0.0,
            UsageCategory::Invocation,
        )
        .unwrap();
        let result = if ok {
            Ok(ChatResponse {
                content: "{\"remarks\":\"r\",\"results\":1}".into(),
                usage: TokenUsage {
                    prompt_tokens: 3,
                    completion_tokens: 7,
                    category: UsageCategory::Invocation,
                },
                latency: Duration::from_millis(5),
                retries: 0,
            })
        } else {
            Err(BackendError::Timeout { retries: 3 })
        };
        CallRecord {
            category: UsageCategory::Invocation,
            request,
            result,
            started_at: Timestamp(9),
            parsed: ok.then(|| ("r".into(), json!(1))),
            violations: vec![],
            invocation_id: ok.then_some(InvocationId([7; 12])),
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let rt = LogicalRuntime::default();
        let ctx = CallContext {
            phase: Some(Phase::Eval),
            entry: Some(4),
            ground_truth: Some(json!(1)),
            correct: Some(true),
        };
        let records = vec![
            OperationLogRecord::from_call(&call(true), &ctx, &rt),
            OperationLogRecord::from_call(&call(false), &ctx, &rt),
        ];
        assert_eq!(records[0].id, InvocationId([7; 12]));
        assert_ne!(records[1].id, records[0].id);
        assert_eq!(records[1].correct, None);
        let mut buf = Vec::new();
        write_log(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("{\"id\":\"070707070707070707070707\""));
        assert_eq!(read_log(&buf[..]).unwrap(), records);
        assert_eq!(records[0].to_request(&[]).unwrap(), call(true).request);
    }

    #[test]
    fn replay_answers_from_log() {
        let rt = LogicalRuntime::default();
        let records = vec![OperationLogRecord::from_call(&call(true), &CallContext::default(), &rt)];
        let stub = replay_backend(&records).unwrap();
        let r = stub.complete(&BackendProfile::new("m"), &call(true).request).unwrap();
        assert_eq!(r.content, "{\"remarks\":\"r\",\"results\":1}");
    }
}

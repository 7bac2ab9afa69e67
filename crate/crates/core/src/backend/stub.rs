use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use spin::Mutex;

use super::{BackendProfile, ChatBackend, ChatRequest, ChatResponse, TokenUsage, UsageCategory};
use crate::error::BackendError;
use crate::memory::{ChatMessage, Role};

/// Decides whether a scripted reply answers a request.
#[derive(Debug, Clone, PartialEq)]
pub enum Matcher {
    Any,
    /// Substring of the last message.
    LastContains(String),
    /// Substring of any message.
    AnyContains(String),
    Category(UsageCategory),
    /// Exact role/content sequence.
    Transcript(Vec<(Role, String)>),
    All(Vec<Matcher>),
}

impl Matcher {
    pub fn last_contains(s: impl Into<String>) -> Self {
        Matcher::LastContains(s.into())
    }

    pub fn transcript(messages: &[ChatMessage]) -> Self {
        Matcher::Transcript(messages.iter().map(|m| (m.role, m.content.clone())).collect())
    }

    pub fn matches(&self, request: &ChatRequest) -> bool {
        match self {
            Matcher::Any => true,
            Matcher::LastContains(s) => request.last_content().contains(s.as_str()),
            Matcher::AnyContains(s) => request.messages().iter().any(|m| m.content.contains(s.as_str())),
            Matcher::Category(c) => request.category == *c,
            Matcher::Transcript(expected) => {
                expected.len() == request.messages().len()
                    && expected
                        .iter()
                        .zip(request.messages())
                        .all(|((r, c), m)| *r == m.role && *c == m.content)
            }
            Matcher::All(all) => all.iter().all(|m| m.matches(request)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StubReply {
    Text(String),
    Fail(BackendError),
}

impl From<&str> for StubReply {
    fn from(s: &str) -> Self {
        StubReply::Text(s.into())
    }
}

impl From<String> for StubReply {
    fn from(s: String) -> Self {
        StubReply::Text(s)
    }
}

/// One request the stub saw and what it answered.
#[derive(Debug, Clone, PartialEq)]
pub struct StubCall {
    pub request: ChatRequest,
    pub reply: Result<String, BackendError>,
}

/// Deterministic scripted backend. Each request consumes the first
/// remaining entry whose matcher fires.
#[derive(Debug)]
pub struct StubBackend {
    script: Mutex<Vec<(Matcher, StubReply)>>,
    calls: Mutex<Vec<StubCall>>,
}

fn prompt_tokens(messages: &[ChatMessage]) -> u64 {
    let chars: u64 = messages.iter().map(|m| m.content.chars().count() as u64).sum();
    chars.div_ceil(4)
}

impl StubBackend {
    pub fn new(script: Vec<(Matcher, StubReply)>) -> Result<Self, BackendError> {
        if script.is_empty() {
            return Err(BackendError::InvalidRequest("stub script is empty".into()));
        }
        Ok(Self {
            script: Mutex::new(script),
            calls: Mutex::new(Vec::new()),
        })
    }

    /// Replies answered strictly in order, regardless of content.
    pub fn sequence<I, R>(replies: I) -> Result<Self, BackendError>
    where
        I: IntoIterator<Item = R>,
        R: Into<StubReply>,
    {
        Self::new(replies.into_iter().map(|r| (Matcher::Any, r.into())).collect())
    }

    pub fn push(&self, matcher: Matcher, reply: impl Into<StubReply>) {
        self.script.lock().push((matcher, reply.into()));
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().len()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().len()
    }

    pub fn calls(&self) -> Vec<StubCall> {
        self.calls.lock().clone()
    }

    fn answer(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let mut script = self.script.lock();
        if script.is_empty() {
            return Err(BackendError::ScriptExhausted);
        }
        let Some(pos) = script.iter().position(|(m, _)| m.matches(request)) else {
            return Err(BackendError::Unmatched {
                request: Box::new(request.clone()),
            });
        };
        match script.remove(pos).1 {
            StubReply::Text(t) => Ok(t),
            StubReply::Fail(e) => Err(e),
        }
    }
}

impl ChatBackend for StubBackend {
    fn complete(&self, _profile: &BackendProfile, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let reply = self.answer(request);
        self.calls.lock().push(StubCall {
            request: request.clone(),
            reply: reply.clone(),
        });
        let content = reply?;
        let usage = TokenUsage {
            prompt_tokens: prompt_tokens(request.messages()),
            completion_tokens: crate::memory::estimate_tokens(&content),
            category: request.category,
        };
        Ok(ChatResponse {
            content,
            usage,
            latency: Duration::ZERO,
            retries: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn req(last: &str, category: UsageCategory) -> ChatRequest {
        ChatRequest::new(
            vec![ChatMessage::system("sys"), ChatMessage::user(last)],
            None,
            "m",
            0.0,
            category,
        )
        .unwrap()
    }

    const VALID: &str = "{\"remarks\":\"r\",\"results\":true}";

    #[test]
    fn single_reply_then_exhaustion() {
        let stub = StubBackend::sequence([VALID]).unwrap();
        let p = BackendProfile::new("m");
        let r = stub.complete(&p, &req("x", UsageCategory::Invocation)).unwrap();
        assert_eq!(r.content, VALID);
        assert_eq!(r.usage.prompt_tokens, 1); // "sys"+"x" = 4 chars
        assert_eq!(r.usage.completion_tokens, 8); // 30 chars
        assert_eq!(
            stub.complete(&p, &req("x", UsageCategory::Invocation)),
            Err(BackendError::ScriptExhausted)
        );
    }

    #[test]
    fn substring_routing() {
        let stub = StubBackend::new(vec![
            (Matcher::last_contains("reflect"), "note".into()),
            (Matcher::Any, VALID.into()),
        ])
        .unwrap();
        let p = BackendProfile::new("m");
        assert_eq!(
            stub.complete(&p, &req("args", UsageCategory::Invocation))
                .unwrap()
                .content,
            VALID
        );
        assert_eq!(
            stub.complete(&p, &req("please reflect", UsageCategory::Reflection))
                .unwrap()
                .content,
            "note"
        );
    }

    #[test]
    fn unmatched_carries_request() {
        let stub = StubBackend::new(vec![(Matcher::Category(UsageCategory::Reflection), "n".into())]).unwrap();
        let r = req("args", UsageCategory::Invocation);
        match stub.complete(&BackendProfile::new("m"), &r) {
            Err(BackendError::Unmatched { request }) => assert_eq!(*request, r),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_transcript() {
        let run = || {
            let stub = StubBackend::sequence(["a", "bb", "ccc"]).unwrap();
            let p = BackendProfile::new("m");
            let out: Vec<_> = ["1", "2", "3"]
                .iter()
                .map(|q| stub.complete(&p, &req(q, UsageCategory::Invocation)))
                .collect();
            (out, stub.calls())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn empty_script_rejected() {
        assert!(StubBackend::new(vec![]).is_err());
    }
}

//! OpenAI-compatible chat-completions client.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use mockfn_core::backend::{BackendProfile, ChatBackend, ChatRequest, ChatResponse, TokenUsage};
use mockfn_core::error::BackendError;
use mockfn_core::memory::{estimate_tokens, Role};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    Io(String),
}

/// Sends one JSON POST. Implementations do not retry.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Transport {
                message: e.to_string(),
                retries: 0,
            })?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
        timeout: Duration,
    ) -> Result<HttpReply, TransportError> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body.to_owned());
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Io(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Io(e.to_string())
            }
        })?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            timeout: Duration::from_secs(120),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base doubled each time, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

pub struct OpenAiBackend {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    sleep: Sleeper,
}

impl OpenAiBackend {
    pub fn new(transport: Arc<dyn Transport>) -> Self {
        Self {
            transport,
            retry: RetryPolicy::default(),
            sleep: Arc::new(std::thread::sleep),
        }
    }

    pub fn with_reqwest() -> Result<Self, BackendError> {
        Ok(Self::new(Arc::new(ReqwestTransport::new()?)))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleep: Sleeper) -> Self {
        self.sleep = sleep;
        self
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

fn schema_name(title: &str) -> String {
    let name: String = title
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    if name.is_empty() {
        "response".into()
    } else {
        name
    }
}

/// The JSON body sent for `request`.
pub fn request_body(request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages()
        .iter()
        .map(|m| json!({"role": role_name(m.role), "content": m.content}))
        .collect();
    let mut body = json!({
        "model": request.model_id,
        "temperature": request.temperature,
        "messages": messages,
    });
    if let Some(schema) = request.response_schema() {
        body["response_format"] = json!({
            "type": "json_schema",
            "json_schema": {
                "name": schema_name(schema.title.as_deref().unwrap_or("response")),
                "strict": schema.fully_required(),
                "schema": schema.to_value(),
            }
        });
    }
    body
}

fn parse_reply(body: &str, request: &ChatRequest) -> Result<(String, TokenUsage), BackendError> {
    let doc: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(format!("body is not JSON: {e}")))?;
    let content = doc
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))?
        .to_owned();
    let prompt = doc.pointer("/usage/prompt_tokens").and_then(Value::as_u64);
    let completion = doc.pointer("/usage/completion_tokens").and_then(Value::as_u64);
    let usage = TokenUsage {
        prompt_tokens: prompt.unwrap_or_else(|| request.messages().iter().map(|m| m.token_estimate).sum()),
        completion_tokens: completion.unwrap_or_else(|| estimate_tokens(&content)),
        category: request.category,
    };
    Ok((content, usage))
}

enum Failure {
    Retry(BackendError),
    Fatal(BackendError),
}

fn classify(reply: HttpReply, retries: u32) -> Failure {
    match reply.status {
        429 => Failure::Retry(BackendError::RateLimited { retries }),
        500..=599 => Failure::Retry(BackendError::Http {
            status: reply.status,
            body: reply.body,
        }),
        401 | 403 => Failure::Fatal(BackendError::Auth(reply.body)),
        400 | 404 | 413 | 422 => Failure::Fatal(BackendError::InvalidRequest(reply.body)),
        status => Failure::Fatal(BackendError::Http {
            status,
            body: reply.body,
        }),
    }
}

impl ChatBackend for OpenAiBackend {
    fn complete(&self, profile: &BackendProfile, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if profile.base_url.trim().is_empty() {
            return Err(BackendError::InvalidRequest("profile has no base_url".into()));
        }
        let key =
            if profile.api_key_env.is_empty() {
                None
            } else {
                Some(std::env::var(&profile.api_key_env).map_err(|_| {
                    BackendError::Auth(format!("environment variable {} is not set", profile.api_key_env))
                })?)
            };
        let url = format!("{}/chat/completions", profile.base_url.trim_end_matches('/'));
        let body = request_body(request).to_string();
        let started = Instant::now();
        let mut retries = 0;
        loop {
            let failure = match self
                .transport
                .post_json(&url, key.as_deref(), &body, self.retry.timeout)
            {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    let (content, usage) = parse_reply(&reply.body, request)?;
                    return Ok(ChatResponse {
                        content,
                        usage,
                        latency: started.elapsed(),
                        retries,
                    });
                }
                Ok(reply) => classify(reply, retries),
                Err(TransportError::Timeout) => Failure::Retry(BackendError::Timeout { retries }),
                Err(TransportError::Io(message)) => Failure::Retry(BackendError::Transport { message, retries }),
            };
            match failure {
                Failure::Fatal(e) => return Err(e),
                Failure::Retry(e) if retries >= self.retry.max_retries => return Err(e),
                Failure::Retry(_) => {
                    (self.sleep)(self.retry.delay(retries));
                    retries += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mockfn_core::backend::UsageCategory;
    use mockfn_core::memory::ChatMessage;
    use std::sync::Mutex;

    struct Scripted {
        replies: Mutex<Vec<Result<HttpReply, TransportError>>>,
        seen: Mutex<Vec<(String, Option<String>, String)>>,
    }

    impl Scripted {
        fn new(mut replies: Vec<Result<HttpReply, TransportError>>) -> Arc<Self> {
            replies.reverse();
            Arc::new(Self {
                replies: Mutex::new(replies),
                seen: Mutex::new(Vec::new()),
            })
        }
    }

    impl Transport for Scripted {
        fn post_json(
            &self,
            url: &str,
            bearer: Option<&str>,
            body: &str,
            _: Duration,
        ) -> Result<HttpReply, TransportError> {
            self.seen
                .lock()
                .unwrap()
                .push((url.into(), bearer.map(Into::into), body.into()));
            self.replies.lock().unwrap().pop().expect("script ran out")
        }
    }

    fn ok(content: &str) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": content}}],
                         "usage": {"prompt_tokens": 11, "completion_tokens": 3}})
            .to_string(),
        })
    }

    fn status(code: u16) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status: code,
            body: "nope".into(),
        })
    }

    fn setup(
        replies: Vec<Result<HttpReply, TransportError>>,
    ) -> (OpenAiBackend, Arc<Scripted>, Arc<Mutex<Vec<Duration>>>) {
        let transport = Scripted::new(replies);
        let sleeps = Arc::new(Mutex::new(Vec::new()));
        let log = sleeps.clone();
        let backend =
            OpenAiBackend::new(transport.clone()).with_sleeper(Arc::new(move |d| log.lock().unwrap().push(d)));
        (backend, transport, sleeps)
    }

    fn profile() -> BackendProfile {
        let mut p = BackendProfile::new("gpt-test");
        p.base_url = "http://localhost:9/v1/".into();
        p
    }

    fn request() -> ChatRequest {
        ChatRequest::new(
            vec![ChatMessage::system("s"), ChatMessage::user("u")],
            None,
            "gpt-test",
            0.0,
            UsageCategory::Reflection,
        )
        .unwrap()
    }

    #[test]
    fn success_reads_content_and_usage() {
        let (b, t, _) = setup(vec![ok("hello")]);
        let r = b.complete(&profile(), &request()).unwrap();
        assert_eq!(r.content, "hello");
        assert_eq!((r.usage.prompt_tokens, r.usage.completion_tokens), (11, 3));
        assert_eq!(r.usage.category, UsageCategory::Reflection);
        let seen = t.seen.lock().unwrap();
        assert_eq!(seen[0].0, "http://localhost:9/v1/chat/completions");
        let body: Value = serde_json::from_str(&seen[0].2).unwrap();
        assert_eq!(body["messages"][1], json!({"role": "user", "content": "u"}));
        assert!(body.get("response_format").is_none());
    }

    #[test]
    fn retries_with_backoff() {
        let (b, _, sleeps) = setup(vec![status(429), status(503), Err(TransportError::Timeout), ok("x")]);
        let r = b.complete(&profile(), &request()).unwrap();
        assert_eq!(r.retries, 3);
        assert_eq!(
            *sleeps.lock().unwrap(),
            [
                Duration::from_millis(500),
                Duration::from_millis(1000),
                Duration::from_millis(2000)
            ]
        );
    }

    #[test]
    fn gives_up_after_max_retries() {
        let (b, _, sleeps) = setup(vec![status(429), status(429), status(429), status(429)]);
        assert_eq!(
            b.complete(&profile(), &request()),
            Err(BackendError::RateLimited { retries: 3 })
        );
        assert_eq!(sleeps.lock().unwrap().len(), 3);
        let (b, _, _) = setup((0..4).map(|_| Err(TransportError::Timeout)).collect());
        assert_eq!(
            b.complete(&profile(), &request()),
            Err(BackendError::Timeout { retries: 3 })
        );
    }

    #[test]
    fn client_errors_fail_fast() {
        let (b, _, sleeps) = setup(vec![status(401)]);
        assert!(matches!(b.complete(&profile(), &request()), Err(BackendError::Auth(_))));
        let (b2, _, _) = setup(vec![status(400)]);
        assert!(matches!(
            b2.complete(&profile(), &request()),
            Err(BackendError::InvalidRequest(_))
        ));
        assert!(sleeps.lock().unwrap().is_empty());
    }

    #[test]
    fn malformed_body() {
        let (b, _, _) = setup(vec![Ok(HttpReply {
            status: 200,
            body: "{\"choices\":[]}".into(),
        })]);
        assert!(matches!(
            b.complete(&profile(), &request()),
            Err(BackendError::Malformed(_))
        ));
    }

    #[test]
    fn missing_key_variable() {
        let (b, t, _) = setup(vec![]);
        let mut p = profile();
        p.api_key_env = "MOCKFN_TEST_SURELY_UNSET_KEY".into();
        assert!(matches!(b.complete(&p, &request()), Err(BackendError::Auth(_))));
        assert!(t.seen.lock().unwrap().is_empty());
    }

    #[test]
    fn delay_is_capped() {
        let r = RetryPolicy::default();
        assert_eq!(r.delay(0), Duration::from_millis(500));
        assert_eq!(r.delay(10), Duration::from_secs(30));
        assert_eq!(r.delay(40), Duration::from_secs(30));
    }
}

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::backend::ChatRequest;
use crate::contract::Violation;
use crate::memory::InvocationId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContractError {
    #[error("invalid contract at '{path}': {reason}")]
    Invalid { path: String, reason: String },
    #[error("argument violates parameter schema at '{path}': {reason}")]
    Violation { path: String, reason: String },
    #[error("cannot parse contract document: {0}")]
    Parse(String),
}

impl ContractError {
    pub(crate) fn invalid(path: &str, reason: &str) -> Self {
        ContractError::Invalid {
            path: path.to_string(),
            reason: reason.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MemoryError {
    #[error("invocation {0} not found")]
    NotFound(InvocationId),
    #[error("invocation {0} already present in branch")]
    DuplicateId(InvocationId),
    #[error("parent branch no longer exists")]
    OrphanBranch,
    #[error("system prompt must not be empty")]
    EmptySystemPrompt,
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {retries} retries")]
    RateLimited { retries: u32 },
    #[error("malformed provider reply: {0}")]
    Malformed(String),
    #[error("request timed out after {retries} retries")]
    Timeout { retries: u32 },
    #[error("transport failure after {retries} retries: {message}")]
    Transport { message: String, retries: u32 },
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("stub script exhausted")]
    ScriptExhausted,
    #[error("no stub matcher fired for the request")]
    Unmatched { request: Box<ChatRequest> },
    #[error("scripted failure: {0}")]
    Scripted(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvokeError {
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("no formally correct response after {attempts} attempts")]
    FormalFailure {
        attempts: u32,
        reports: Vec<Vec<Violation>>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainerError {
    #[error("cannot compare {predicted} with {truth}")]
    TypeMismatch { predicted: String, truth: String },
    #[error("reflection produced an empty note")]
    EmptyReflection,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Invoke(#[from] InvokeError),
    #[error("refinement policy failed: {0}")]
    Policy(String),
}

/// A script failed to compile.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {message}")]
pub struct CompileError {
    pub line: u32,
    pub column: u32,
    pub message: String,
}

/// A compiled script failed while running.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScriptFault {
    #[error("{line}:{column}: {message}")]
    Runtime { line: u32, column: u32, message: String },
    #[error("step budget of {0} exceeded")]
    StepBudget(u64),
    #[error("script finished without returning a value")]
    NoReturn,
    #[error("script output rejected: {0}")]
    BadOutput(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenerationError {
    #[error("no compilable script after {attempts} attempts")]
    Exhausted { attempts: u32, diagnostics: Vec<String> },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

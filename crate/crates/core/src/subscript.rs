//! Substitution scripts: generation with compile feedback, execution, invalidation.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

use crate::backend::{BackendProfile, UsageCategory};
use crate::error::{GenerationError, ScriptFault};
use crate::memory::ChatMessage;
use crate::mockfn::MockFunction;
use crate::prompts;
use crate::runtime::Timestamp;
use crate::script::{Program, ScriptOutput};

pub const DEFAULT_GENERATION_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone)]
pub struct SubstitutionScript {
    pub source: String,
    pub program: Program,
    pub valid: bool,
    pub generation_attempts: u32,
    pub generated_at: Timestamp,
}

impl SubstitutionScript {
    /// Compiles `source` into a valid script.
    pub fn compile(
        source: impl Into<String>,
        generation_attempts: u32,
        generated_at: Timestamp,
    ) -> Result<Self, crate::error::CompileError> {
        let source = source.into();
        let program = Program::compile(&source)?;
        Ok(Self {
            source,
            program,
            valid: true,
            generation_attempts,
            generated_at,
        })
    }
}

/// Pulls script source out of a reply: the first fenced block, or the
/// whole reply when there is none.
pub fn extract_source(reply: &str) -> &str {
    let Some(open) = reply.find("```") else {
        return reply.trim();
    };
    let after = &reply[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// Asks the model for a script, feeding compile errors back until one
/// compiles. On success the script is installed; on failure the slot is
/// left empty and the function keeps calling the model.
pub fn generate_script<'f>(
    function: &'f mut MockFunction,
    profile: &BackendProfile,
    max_attempts: u32,
) -> Result<&'f SubstitutionScript, GenerationError> {
    function.invalidate_script();
    let max_attempts = max_attempts.max(1);
    let (exec, memory, journal) = function.parts();
    let mut messages = memory.render_context();
    messages.push(ChatMessage::user(prompts::script_generation(
        exec.contract(),
        exec.param_schema(),
        exec.response_schema(),
    )));
    let mut diagnostics = Vec::new();
    let mut compiled = None;
    for attempt in 1..=max_attempts {
        let reply = exec
            .call(
                profile,
                messages.clone(),
                None,
                UsageCategory::ScriptGeneration,
                journal,
            )?
            .content;
        let source = extract_source(&reply);
        match SubstitutionScript::compile(source, attempt, exec.runtime().now()) {
            Ok(script) => {
                compiled = Some(script);
                break;
            }
            Err(e) => {
                let diagnostic = e.to_string();
                messages.push(ChatMessage::assistant(reply.clone()));
                messages.push(ChatMessage::user(prompts::compile_feedback(&diagnostic)));
                diagnostics.push(diagnostic);
            }
        }
    }
    match compiled {
        Some(script) => {
            function.install_script(script);
            Ok(function.script().expect("just installed"))
        }
        None => Err(GenerationError::Exhausted {
            attempts: max_attempts,
            diagnostics,
        }),
    }
}

/// Runs a script and checks its output shape.
pub fn execute_script(script: &SubstitutionScript, args: &Value, budget: u64) -> Result<ScriptOutput, ScriptFault> {
    ScriptOutput::from_value(script.program.run(args, budget)?)
}

/// Clears the script slot. The next call goes to the model.
pub fn invalidate(function: &mut MockFunction) {
    function.invalidate_script();
}

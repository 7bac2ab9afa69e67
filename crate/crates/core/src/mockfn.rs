//! The mock-function executor.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde_json::Value;

use crate::backend::{BackendProfile, ChatBackend, ChatRequest, ChatResponse, UsageCategory};
use crate::contract::{
    build_parameter_schema, build_response_schema, render_arguments, validate, validate_response, FunctionContract,
    SchemaDoc, Violation,
};
use crate::error::{BackendError, InvokeError, MemoryError, ScriptFault};
use crate::memory::{ChatMessage, InvocationId, MemoryBranch, MockInvocation};
use crate::prompts;
use crate::runtime::{Runtime, Timestamp};
use crate::script::DEFAULT_STEP_BUDGET;
use crate::subscript::{execute_script, SubstitutionScript};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServedBy {
    Llm,
    Script,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvocationOutcome {
    pub invocation: MockInvocation,
    /// Model requests spent; zero when the script answered.
    pub attempts: u32,
    pub formally_correct_first_try: bool,
    pub served_by: ServedBy,
    /// Set when an installed script faulted and the call fell back to the model.
    pub script_fault: Option<ScriptFault>,
    /// Set when the installed script declined the arguments.
    pub script_declined: bool,
}

/// One backend call, successful or not.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub category: UsageCategory,
    pub request: ChatRequest,
    pub result: Result<ChatResponse, BackendError>,
    pub started_at: Timestamp,
    /// For invocation calls: the parsed `(remarks, results)` when the reply validated.
    pub parsed: Option<(String, Value)>,
    /// For invocation calls: what was wrong with the reply.
    pub violations: Vec<Violation>,
    /// For invocation calls that validated: the id of the resulting invocation.
    pub invocation_id: Option<InvocationId>,
}

/// Pulls a JSON document out of a reply; a fenced code block holding the
/// document is accepted.
pub fn extract_document(reply: &str) -> &str {
    let trimmed = reply.trim();
    if trimmed.starts_with('{') || !trimmed.contains("```") {
        return trimmed;
    }
    let Some(open) = trimmed.find("```") else {
        return trimmed;
    };
    let after = &trimmed[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => body[..close].trim(),
        None => body.trim(),
    }
}

/// Executor pieces shared by every branch a function runs on.
pub struct Executor {
    contract: FunctionContract,
    param_schema: SchemaDoc,
    response_schema: SchemaDoc,
    results_schema: SchemaDoc,
    system_prompt: ChatMessage,
    profile: BackendProfile,
    max_attempts: u32,
    backend: Arc<dyn ChatBackend>,
    runtime: Arc<dyn Runtime>,
}

impl Executor {
    pub fn contract(&self) -> &FunctionContract {
        &self.contract
    }

    pub fn param_schema(&self) -> &SchemaDoc {
        &self.param_schema
    }

    pub fn response_schema(&self) -> &SchemaDoc {
        &self.response_schema
    }

    pub fn profile(&self) -> &BackendProfile {
        &self.profile
    }

    pub fn runtime(&self) -> &dyn Runtime {
        &*self.runtime
    }

    pub fn max_attempts(&self) -> u32 {
        self.max_attempts
    }

    /// Sends one request and journals it.
    pub fn call(
        &self,
        profile: &BackendProfile,
        messages: Vec<ChatMessage>,
        schema: Option<&SchemaDoc>,
        category: UsageCategory,
        journal: &mut Vec<CallRecord>,
    ) -> Result<ChatResponse, BackendError> {
        let request = ChatRequest::for_profile(profile, messages, schema, category)?;
        let started_at = self.runtime.now();
        let result = self.backend.complete(profile, &request);
        journal.push(CallRecord {
            category,
            request,
            result: result.clone(),
            started_at,
            parsed: None,
            violations: Vec::new(),
            invocation_id: None,
        });
        result
    }

    fn answer_from_script(
        &self,
        script: &SubstitutionScript,
        args: &Value,
        request: &str,
    ) -> Result<Option<MockInvocation>, ScriptFault> {
        let out = execute_script(script, args, DEFAULT_STEP_BUDGET)?;
        if !out.ready {
            return Ok(None);
        }
        let report = validate(&self.results_schema, &out.results);
        if let Some(v) = report.violations.first() {
            return Err(ScriptFault::BadOutput(alloc::format!(
                "\"Results\" violates the schema at {v}"
            )));
        }
        Ok(Some(self.make_invocation(args, request, out.remarks, out.results)))
    }

    fn make_invocation(&self, args: &Value, request: &str, remarks: String, results: Value) -> MockInvocation {
        MockInvocation {
            id: self.runtime.next_id(),
            arguments: args.clone(),
            request: request.to_string(),
            remarks,
            results,
            ground_truth: None,
            correct: None,
            reflected: false,
            created_at: self.runtime.now(),
        }
    }

    /// Runs one call against `branch` without modifying it. Rejected
    /// replies and correction requests never reach the branch.
    pub fn run(
        &self,
        branch: &MemoryBranch,
        script: Option<&SubstitutionScript>,
        args: &Value,
        journal: &mut Vec<CallRecord>,
    ) -> Result<InvocationOutcome, InvokeError> {
        let request = render_arguments(&self.contract, args)?;
        let mut script_fault = None;
        let mut script_declined = false;
        if let Some(script) = script.filter(|s| s.valid) {
            match self.answer_from_script(script, args, &request) {
                Ok(Some(invocation)) => {
                    return Ok(InvocationOutcome {
                        invocation,
                        attempts: 0,
                        formally_correct_first_try: true,
                        served_by: ServedBy::Script,
                        script_fault: None,
                        script_declined: false,
                    })
                }
                Ok(None) => script_declined = true,
                Err(fault) => script_fault = Some(fault),
            }
        }

        let mut messages = branch.render_context();
        messages.push(ChatMessage::user(request.clone()));
        let mut reports: Vec<Vec<Violation>> = Vec::new();
        for attempt in 1..=self.max_attempts {
            let reply = self
                .call(
                    &self.profile,
                    messages.clone(),
                    Some(&self.response_schema),
                    UsageCategory::Invocation,
                    journal,
                )?
                .content;
            let document = extract_document(&reply);
            let report = validate_response(&self.response_schema, document);
            let record = journal.last_mut().expect("call() journals every request");
            if report.is_ok() {
                let mut doc: serde_json::Map<String, Value> =
                    serde_json::from_str(document).expect("validated documents parse");
                let remarks = match doc.remove("remarks") {
                    Some(Value::String(s)) => s,
                    _ => unreachable!("schema requires string remarks"),
                };
                let results = doc.remove("results").expect("schema requires results");
                record.parsed = Some((remarks.clone(), results.clone()));
                let invocation = self.make_invocation(args, &request, remarks, results);
                record.invocation_id = Some(invocation.id);
                return Ok(InvocationOutcome {
                    invocation,
                    attempts: attempt,
                    formally_correct_first_try: attempt == 1,
                    served_by: ServedBy::Llm,
                    script_fault,
                    script_declined,
                });
            }
            record.violations = report.violations.clone();
            messages.push(ChatMessage::assistant(reply));
            messages.push(ChatMessage::user(prompts::correction(&report.violations)));
            reports.push(report.violations);
        }
        Err(InvokeError::FormalFailure {
            attempts: self.max_attempts,
            reports,
        })
    }
}

/// A function executed by a model role-playing its contract.
pub struct MockFunction {
    exec: Executor,
    memory: MemoryBranch,
    script: Option<SubstitutionScript>,
    journal: Vec<CallRecord>,
}

impl MockFunction {
    pub fn new(
        contract: FunctionContract,
        profile: BackendProfile,
        backend: Arc<dyn ChatBackend>,
        runtime: Arc<dyn Runtime>,
    ) -> Self {
        let param_schema = build_parameter_schema(&contract);
        let response_schema = build_response_schema(&contract);
        let results_schema = response_schema
            .property("results")
            .expect("response schema has results")
            .clone();
        let system_prompt = build_system_prompt(&contract, &param_schema, &response_schema);
        let memory = MemoryBranch::new(system_prompt.clone()).expect("generated system prompt is never empty");
        Self {
            exec: Executor {
                contract,
                param_schema,
                response_schema,
                results_schema,
                system_prompt,
                profile,
                max_attempts: DEFAULT_MAX_ATTEMPTS,
                backend,
                runtime,
            },
            memory,
            script: None,
            journal: Vec::new(),
        }
    }

    pub fn with_max_attempts(mut self, attempts: u32) -> Self {
        self.exec.max_attempts = attempts.max(1);
        self
    }

    /// Replaces the memory, e.g. with one restored from a snapshot. The
    /// system prompt is reset to this function's.
    pub fn with_memory(mut self, mut memory: MemoryBranch) -> Result<Self, MemoryError> {
        memory.set_system_prompt(self.exec.system_prompt.clone())?;
        self.memory = memory;
        Ok(self)
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    pub fn contract(&self) -> &FunctionContract {
        &self.exec.contract
    }

    pub fn system_prompt(&self) -> &ChatMessage {
        &self.exec.system_prompt
    }

    pub fn memory(&self) -> &MemoryBranch {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut MemoryBranch {
        &mut self.memory
    }

    pub fn script(&self) -> Option<&SubstitutionScript> {
        self.script.as_ref()
    }

    pub fn install_script(&mut self, script: SubstitutionScript) {
        self.script = Some(script);
    }

    /// Clears the script slot; the next call goes to the model.
    pub fn invalidate_script(&mut self) {
        self.script = None;
    }

    pub fn journal(&self) -> &[CallRecord] {
        &self.journal
    }

    pub fn drain_journal(&mut self) -> Vec<CallRecord> {
        core::mem::take(&mut self.journal)
    }

    /// Removes and returns journal entries from `start` on.
    pub fn take_journal_from(&mut self, start: usize) -> Vec<CallRecord> {
        self.journal.split_off(start.min(self.journal.len()))
    }

    pub(crate) fn parts(&mut self) -> (&Executor, &mut MemoryBranch, &mut Vec<CallRecord>) {
        (&self.exec, &mut self.memory, &mut self.journal)
    }

    /// Calls the function. Model-served results are registered in memory;
    /// script-served results are not.
    pub fn invoke(&mut self, args: &Value) -> Result<InvocationOutcome, InvokeError> {
        let outcome = self
            .exec
            .run(&self.memory, self.script.as_ref(), args, &mut self.journal)?;
        if outcome.script_fault.is_some() {
            self.script = None;
        }
        if outcome.served_by == ServedBy::Llm {
            self.memory.push(outcome.invocation.clone())?;
        }
        Ok(outcome)
    }

    /// Calls the function against a frozen copy of memory; nothing is
    /// registered. Safe to run from several threads at once.
    pub fn evaluate(&self, args: &Value) -> (Result<InvocationOutcome, InvokeError>, Vec<CallRecord>) {
        let scratch = self.memory.create_branch();
        let mut journal = Vec::new();
        let outcome = self.exec.run(&scratch, self.script.as_ref(), args, &mut journal);
        scratch.drop_branch();
        (outcome, journal)
    }

    /// Invocation ids currently in memory, oldest first.
    pub fn memory_ids(&self) -> Vec<InvocationId> {
        self.memory.invocations().iter().map(|i| i.id).collect()
    }
}

pub fn build_system_prompt(
    contract: &FunctionContract,
    param_schema: &SchemaDoc,
    response_schema: &SchemaDoc,
) -> ChatMessage {
    ChatMessage::system(prompts::system_prompt(contract, param_schema, response_schema))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{StubBackend, StubReply};
    use crate::contract::{ParamSpec, TaskKind, ValueSpec, ValueType};
    use crate::runtime::LogicalRuntime;
    use alloc::vec;
    use serde_json::json;

    fn contract() -> FunctionContract {
        FunctionContract::new(
            "is_adult",
            "Decides whether a person is an adult.",
            vec![ParamSpec::new(
                "age",
                ValueSpec::new(ValueType::Integer).described("age in years"),
            )],
            ValueSpec::new(ValueType::Boolean),
            TaskKind::Classification,
        )
        .unwrap()
    }

    fn function(stub: Arc<StubBackend>) -> MockFunction {
        MockFunction::new(
            contract(),
            BackendProfile::new("stub"),
            stub,
            Arc::new(LogicalRuntime::default()),
        )
    }

    const OK: &str = r#"{"remarks":"18 or older","results":true}"#;

    #[test]
    fn prompt_contains_both_schemas() {
        let c = contract();
        let p = build_parameter_schema(&c);
        let r = build_response_schema(&c);
        let prompt = build_system_prompt(&c, &p, &r);
        assert!(prompt.content.contains(&p.to_json_string()));
        assert!(prompt.content.contains(&r.to_json_string()));
        assert!(prompt.content.contains("is_adult"));
        assert!(prompt.content.contains("\"remarks\""));
        assert_eq!(prompt, build_system_prompt(&c, &p, &r));
    }

    #[test]
    fn prompt_without_description_names_function() {
        let c = FunctionContract::new(
            "g",
            "",
            vec![ParamSpec::new("x", ValueSpec::new(ValueType::Number).described("an x"))],
            ValueSpec::new(ValueType::Number),
            TaskKind::Regression,
        )
        .unwrap();
        let r = build_response_schema(&c);
        let prompt = build_system_prompt(&c, &build_parameter_schema(&c), &r);
        assert!(prompt.content.contains("`g`"));
        assert!(prompt.content.contains(&r.to_json_string()));
    }

    #[test]
    fn valid_first_try() {
        let stub = Arc::new(StubBackend::sequence([OK]).unwrap());
        let mut f = function(stub.clone());
        let out = f.invoke(&json!({"age": 30})).unwrap();
        assert_eq!(out.attempts, 1);
        assert!(out.formally_correct_first_try);
        assert_eq!(out.served_by, ServedBy::Llm);
        assert_eq!(out.invocation.results, json!(true));
        assert_eq!(f.memory().len(), 1);
        assert_eq!(f.memory().render_context().len(), 3);
        let req = &stub.calls()[0].request;
        assert_eq!(req.last_content(), r#"{"age":30}"#);
    }

    #[test]
    fn prose_then_valid() {
        let stub = Arc::new(StubBackend::sequence(["I think yes.", OK]).unwrap());
        let mut f = function(stub.clone());
        let out = f.invoke(&json!({"age": 30})).unwrap();
        assert_eq!(out.attempts, 2);
        assert!(!out.formally_correct_first_try);
        let second = &stub.calls()[1].request;
        assert!(second.last_content().contains("not valid JSON"));
        // the rejected exchange is not kept
        assert_eq!(f.memory().render_context().len(), 3);
    }

    #[test]
    fn garbage_exhausts_attempts() {
        let stub = Arc::new(StubBackend::sequence(["no", "{\"results\":1}", "{}"]).unwrap());
        let mut f = function(stub);
        match f.invoke(&json!({"age": 3})) {
            Err(InvokeError::FormalFailure { attempts, reports }) => {
                assert_eq!(attempts, 3);
                assert_eq!(reports.len(), 3);
                assert_eq!(reports[1][0].path, "/remarks");
            }
            other => panic!("{other:?}"),
        }
        assert!(f.memory().is_empty());
        assert_eq!(f.journal().len(), 3);
    }

    #[test]
    fn fenced_reply_accepted() {
        let fenced = alloc::format!("Here you go:\n```json\n{OK}\n```\n");
        let stub = Arc::new(StubBackend::sequence([fenced.as_str()]).unwrap());
        let mut f = function(stub);
        assert_eq!(f.invoke(&json!({"age": 30})).unwrap().attempts, 1);
    }

    #[test]
    fn backend_error_propagates() {
        let stub = Arc::new(StubBackend::sequence([StubReply::Fail(BackendError::Auth("bad key".into()))]).unwrap());
        let mut f = function(stub);
        assert!(matches!(
            f.invoke(&json!({"age": 30})),
            Err(InvokeError::Backend(BackendError::Auth(_)))
        ));
        assert!(f.memory().is_empty());
    }

    #[test]
    fn bad_arguments_rejected_before_call() {
        let stub = Arc::new(StubBackend::sequence([OK]).unwrap());
        let mut f = function(stub.clone());
        assert!(matches!(
            f.invoke(&json!({"age": "old"})),
            Err(InvokeError::Contract(_))
        ));
        assert_eq!(stub.call_count(), 0);
    }

    #[test]
    fn structured_profiles_send_schema() {
        let stub = Arc::new(StubBackend::sequence([OK]).unwrap());
        let mut f = MockFunction::new(
            contract(),
            BackendProfile::new("gpt").structured(true),
            stub.clone(),
            Arc::new(LogicalRuntime::default()),
        );
        f.invoke(&json!({"age": 30})).unwrap();
        assert!(stub.calls()[0].request.response_schema().is_some());
    }

    #[test]
    fn evaluate_leaves_memory_alone() {
        let stub = Arc::new(StubBackend::sequence([OK]).unwrap());
        let f = function(stub);
        let (out, calls) = f.evaluate(&json!({"age": 30}));
        assert!(out.is_ok());
        assert_eq!(calls.len(), 1);
        assert!(f.memory().is_empty());
    }

    #[test]
    fn extract_variants() {
        assert_eq!(extract_document("  {\"a\":1} "), "{\"a\":1}");
        assert_eq!(extract_document("```\n{\"a\":1}\n```"), "{\"a\":1}");
        assert_eq!(extract_document("text ```json\n{}\n``` more"), "{}");
        assert_eq!(extract_document("plain"), "plain");
    }
}

//! The training loop: invoke, compare with ground truth, reflect, refine memory.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{BackendProfile, UsageCategory};
use crate::canonical::canonical_json;
use crate::contract::TaskKind;
use crate::error::{InvokeError, MemoryError, TrainerError};
use crate::memory::{ChatMessage, InvocationId, MemoryBranch, MockInvocation};
use crate::mockfn::{CallRecord, Executor, MockFunction, ServedBy};
use crate::prompts;
use crate::runtime::Timestamp;
use crate::subscript::{generate_script, DEFAULT_GENERATION_ATTEMPTS};

/// One labelled dataset row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub arguments: Value,
    pub truth: Value,
}

/// Decides how a new invocation enters memory.
pub trait MemoryRefiner: Send + Sync {
    fn refine(&self, memory: &mut MemoryBranch, new: MockInvocation, limit: usize) -> Result<(), TrainerError>;
}

#[derive(Clone, Default)]
pub enum RefinementPolicy {
    #[default]
    Replace,
    Compress,
    Custom(Arc<dyn MemoryRefiner>),
}

impl core::fmt::Debug for RefinementPolicy {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Self::Replace => "Replace",
            Self::Compress => "Compress",
            Self::Custom(_) => "Custom",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScriptSettings {
    pub generator_profile: BackendProfile,
    pub max_attempts: u32,
}

impl ScriptSettings {
    pub fn new(generator_profile: BackendProfile) -> Self {
        Self {
            generator_profile,
            max_attempts: DEFAULT_GENERATION_ATTEMPTS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainerConfig {
    /// Most invocations kept in memory; 0 skips training.
    pub context_length_limit: usize,
    /// Largest tolerated absolute error for regression tasks.
    pub error_threshold: f64,
    pub refinement_policy: RefinementPolicy,
    pub reflector_profile: BackendProfile,
    pub script: Option<ScriptSettings>,
}

impl TrainerConfig {
    pub fn new(context_length_limit: usize, reflector_profile: BackendProfile) -> Self {
        Self {
            context_length_limit,
            error_threshold: 0.0,
            refinement_policy: RefinementPolicy::Replace,
            reflector_profile,
            script: None,
        }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.error_threshold = threshold;
        self
    }

    pub fn with_policy(mut self, policy: RefinementPolicy) -> Self {
        self.refinement_policy = policy;
        self
    }

    pub fn with_script(mut self, settings: ScriptSettings) -> Self {
        self.script = Some(settings);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionNote {
    pub source_invocation_id: InvocationId,
    /// The mistake analysis section, when the reply has one.
    pub analysis: String,
    /// The full note; it becomes the invocation's remarks.
    pub notes: String,
    pub created_at: Timestamp,
}

impl ReflectionNote {
    /// Parses a reflection reply. Fails on an empty reply.
    pub fn parse(source: InvocationId, reply: &str, created_at: Timestamp) -> Result<Self, TrainerError> {
        let notes = reply.trim();
        if notes.is_empty() {
            return Err(TrainerError::EmptyReflection);
        }
        let analysis = match notes.find("Mistake Analysis") {
            Some(start) => {
                let rest = notes[start + "Mistake Analysis".len()..].trim_start_matches(':');
                let end = rest.find(prompts::NOTES_HEADING).unwrap_or(rest.len());
                rest[..end].trim().to_string()
            }
            None => String::new(),
        };
        Ok(Self {
            source_invocation_id: source,
            analysis,
            notes: notes.to_string(),
            created_at,
        })
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Whether a prediction is wrong enough to reflect on. Regression compares
/// absolute difference against `threshold`; everything else needs an exact
/// canonical match.
pub fn should_reflect(kind: TaskKind, threshold: f64, predicted: &Value, truth: &Value) -> Result<bool, TrainerError> {
    let mismatch = || TrainerError::TypeMismatch {
        predicted: kind_name(predicted).into(),
        truth: kind_name(truth).into(),
    };
    match kind {
        TaskKind::Regression => {
            let (Some(p), Some(t)) = (predicted.as_f64(), truth.as_f64()) else {
                return Err(mismatch());
            };
            Ok(libm::fabs(p - t) > threshold)
        }
        TaskKind::Classification | TaskKind::Generic => {
            if kind_name(predicted) != kind_name(truth) {
                return Err(mismatch());
            }
            Ok(canonical_json(predicted) != canonical_json(truth))
        }
    }
}

/// Asks the reflector about a wrong answer. The exchange happens on a
/// sub-branch that is dropped afterwards.
pub fn reflect(
    exec: &Executor,
    memory: &MemoryBranch,
    invocation: &MockInvocation,
    truth: &Value,
    profile: &BackendProfile,
    journal: &mut Vec<CallRecord>,
) -> Result<ReflectionNote, TrainerError> {
    let mut branch = memory.create_branch();
    if branch.get(invocation.id).is_none() {
        branch.push(invocation.clone())?;
    }
    let mut messages = branch.render_context();
    branch.drop_branch();
    messages.push(ChatMessage::user(prompts::reflection(invocation, truth)));
    let reply = exec.call(profile, messages, None, UsageCategory::Reflection, journal)?;
    ReflectionNote::parse(invocation.id, &reply.content, exec.runtime().now())
}

/// Rewrites an invocation with the ground truth and the note.
pub fn apply_reflection(invocation: &mut MockInvocation, truth: &Value, note: &ReflectionNote) {
    invocation.results = truth.clone();
    invocation.remarks = note.notes.clone();
    invocation.reflected = true;
}

/// Same as [`apply_reflection`] for an invocation already in memory.
pub fn apply_reflection_in(
    memory: &mut MemoryBranch,
    id: InvocationId,
    truth: &Value,
    note: &ReflectionNote,
) -> Result<(), MemoryError> {
    memory.with_invocation(id, |inv| apply_reflection(inv, truth, note))
}

fn is_correct(inv: &MockInvocation) -> bool {
    inv.correct == Some(true)
}

/// The default replacement policy. Below the limit the new invocation is
/// appended. At the limit the first correct (unreflected) invocation is
/// overwritten; failing that a correct newcomer is dropped, and an
/// incorrect one evicts the earliest invocation and is appended.
pub fn refine_replace(memory: &mut MemoryBranch, new: MockInvocation, limit: usize) -> Result<(), MemoryError> {
    if limit == 0 {
        return Ok(());
    }
    let history = memory.invocations();
    if history.len() < limit {
        return memory.push(new);
    }
    if let Some(i) = history.iter().position(|inv| is_correct(inv) && !inv.reflected) {
        return memory.replace_at(i, new);
    }
    if is_correct(&new) {
        return Ok(());
    }
    memory.remove_at(0);
    memory.push(new)
}

/// Replaces every invocation with a model-written summary. Memory is left
/// untouched if the call fails.
pub fn refine_compress(
    exec: &Executor,
    memory: &mut MemoryBranch,
    profile: &BackendProfile,
    journal: &mut Vec<CallRecord>,
) -> Result<(), TrainerError> {
    if memory.is_empty() {
        return Ok(());
    }
    let mut messages = memory.render_context();
    messages.push(ChatMessage::user(prompts::COMPRESSION));
    let reply = exec.call(profile, messages, None, UsageCategory::Compression, journal)?;
    let summary = reply.content.trim();
    if summary.is_empty() {
        return Err(TrainerError::Policy("compression produced an empty summary".into()));
    }
    memory.clear_invocations();
    memory.set_compressed_summary(Some(summary.to_string()));
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOutcome {
    pub index: usize,
    pub invocation_id: Option<InvocationId>,
    pub served_by: Option<ServedBy>,
    pub predicted: Option<Value>,
    pub truth: Value,
    pub correct: Option<bool>,
    pub reflected: bool,
    pub attempts: u32,
    pub formally_correct_first_try: bool,
    pub memory_len: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// True when the context length limit is 0 and nothing ran.
    pub skipped: bool,
    pub entries: Vec<EntryOutcome>,
    pub reflections: Vec<ReflectionNote>,
    pub final_memory_size: usize,
    pub script_generated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_error: Option<String>,
}

impl TrainingReport {
    pub fn reflection_count(&self) -> usize {
        self.reflections.len()
    }
}

fn refine(
    exec: &Executor,
    memory: &mut MemoryBranch,
    journal: &mut Vec<CallRecord>,
    new: MockInvocation,
    config: &TrainerConfig,
    errors: &mut Vec<String>,
) -> Result<(), TrainerError> {
    let limit = config.context_length_limit;
    match &config.refinement_policy {
        RefinementPolicy::Replace => refine_replace(memory, new, limit)?,
        RefinementPolicy::Custom(refiner) => refiner.refine(memory, new, limit)?,
        RefinementPolicy::Compress => {
            memory.push(new)?;
            if memory.len() >= limit {
                if let Err(e) = refine_compress(exec, memory, &config.reflector_profile, journal) {
                    errors.push(e.to_string());
                }
            }
        }
    }
    while memory.len() > limit {
        memory.remove_at(0);
    }
    Ok(())
}

/// Receives each entry's outcome with the backend calls it made. The
/// final script generation is reported with no entry.
pub type TrainObserver<'a> = &'a mut dyn FnMut(Option<&EntryOutcome>, Vec<CallRecord>);

/// Runs one pass over `dataset`. Per-entry failures are recorded and
/// training continues. Backend calls stay in the function's journal.
pub fn train(function: &mut MockFunction, dataset: &[Example], config: &TrainerConfig) -> TrainingReport {
    run_training(function, dataset, config, None)
}

/// Like [`train`], but hands each entry's calls to `observer` instead of
/// leaving them in the journal.
pub fn train_observed(
    function: &mut MockFunction,
    dataset: &[Example],
    config: &TrainerConfig,
    observer: TrainObserver<'_>,
) -> TrainingReport {
    run_training(function, dataset, config, Some(observer))
}

fn run_training(
    function: &mut MockFunction,
    dataset: &[Example],
    config: &TrainerConfig,
    mut observer: Option<TrainObserver<'_>>,
) -> TrainingReport {
    let mut report = TrainingReport {
        skipped: config.context_length_limit == 0,
        entries: Vec::new(),
        reflections: Vec::new(),
        final_memory_size: function.memory().len(),
        script_generated: false,
        script_error: None,
    };
    if report.skipped {
        return report;
    }
    let kind = function.contract().task_kind();
    for (index, example) in dataset.iter().enumerate() {
        let mut entry = EntryOutcome {
            index,
            invocation_id: None,
            served_by: None,
            predicted: None,
            truth: example.truth.clone(),
            correct: None,
            reflected: false,
            attempts: 0,
            formally_correct_first_try: false,
            memory_len: 0,
            errors: Vec::new(),
        };
        let script = function.script().cloned();
        let mark = function.journal().len();
        let (exec, memory, journal) = function.parts();
        let outcome = exec.run(memory, script.as_ref(), &example.arguments, journal);
        let mut drop_script = false;
        match outcome {
            Err(e) => {
                if let InvokeError::FormalFailure { attempts, .. } = &e {
                    entry.attempts = *attempts;
                }
                entry.errors.push(e.to_string());
            }
            Ok(out) => {
                entry.invocation_id = Some(out.invocation.id);
                entry.served_by = Some(out.served_by);
                entry.predicted = Some(out.invocation.results.clone());
                entry.attempts = out.attempts;
                entry.formally_correct_first_try = out.formally_correct_first_try;
                if let Some(fault) = &out.script_fault {
                    entry.errors.push(fault.to_string());
                    drop_script = true;
                }
                match should_reflect(kind, config.error_threshold, &out.invocation.results, &example.truth) {
                    Err(e) => entry.errors.push(e.to_string()),
                    Ok(wrong) => {
                        entry.correct = Some(!wrong);
                        // correct script answers stay out of memory
                        if out.served_by == ServedBy::Llm || wrong {
                            let mut inv = out.invocation;
                            inv.ground_truth = Some(example.truth.clone());
                            inv.correct = Some(!wrong);
                            if wrong {
                                drop_script = true;
                                match reflect(exec, memory, &inv, &example.truth, &config.reflector_profile, journal) {
                                    Ok(note) => {
                                        apply_reflection(&mut inv, &example.truth, &note);
                                        entry.reflected = true;
                                        report.reflections.push(note);
                                    }
                                    Err(e) => entry.errors.push(e.to_string()),
                                }
                            }
                            if let Err(e) = refine(exec, memory, journal, inv, config, &mut entry.errors) {
                                entry.errors.push(e.to_string());
                            }
                        }
                    }
                }
            }
        }
        if drop_script {
            function.invalidate_script();
        }
        entry.memory_len = function.memory().len();
        if let Some(observe) = observer.as_mut() {
            let calls = function.take_journal_from(mark);
            observe(Some(&entry), calls);
        }
        report.entries.push(entry);
    }
    if let Some(settings) = &config.script {
        if function.script().is_none() {
            let mark = function.journal().len();
            match generate_script(function, &settings.generator_profile, settings.max_attempts) {
                Ok(_) => report.script_generated = true,
                Err(e) => report.script_error = Some(e.to_string()),
            }
            if let Some(observe) = observer.as_mut() {
                let calls = function.take_journal_from(mark);
                observe(None, calls);
            }
        }
    }
    report.final_memory_size = function.memory().len();
    report
}

//! Train/eval driver and run artifacts.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use mockfn_core::backend::{cost_report, BackendProfile, ChatBackend, CostBreakdown};
use mockfn_core::contract::FunctionContract;
use mockfn_core::error::InvokeError;
use mockfn_core::memory::{BranchSnapshot, MemoryBranch};
use mockfn_core::metrics::{compute_metrics, MetricsReport};
use mockfn_core::mockfn::{CallRecord, InvocationOutcome, MockFunction, ServedBy};
use mockfn_core::rag::{inject_rag, RagMaterial};
use mockfn_core::runtime::{LogicalRuntime, Runtime, Timestamp};
use mockfn_core::subscript::SubstitutionScript;
use mockfn_core::trainer::{should_reflect, train_observed, Example, TrainerConfig, TrainingReport};

use crate::config::{ConfigError, RunConfig, RuntimeKind};
use crate::dataset::{load_dataset, DatasetError, Split};
use crate::oplog::{read_log, replay_backend, write_log, CallContext, LogError, OperationLogRecord, Phase};
use crate::runtime::SystemRuntime;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.into(),
        source,
    }
}

/// Everything a run needs besides the backend and runtime.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub contract: FunctionContract,
    pub split: Split,
    pub profile: BackendProfile,
    pub trainer: TrainerConfig,
    pub max_attempts: u32,
    pub rag: Vec<RagMaterial>,
    pub parallelism: usize,
    /// False skips the training phase.
    pub train: bool,
    /// Starting memory, e.g. from an earlier training run.
    pub memory: Option<BranchSnapshot>,
    pub script_source: Option<String>,
}

/// One evaluated entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Value>,
    pub truth: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub served_by: Option<ServedBy>,
    pub attempts: u32,
    pub formally_correct_first_try: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: Vec<OperationLogRecord>,
    pub training: Option<TrainingReport>,
    pub predictions: Vec<Prediction>,
    pub metrics: MetricsReport,
    pub cost: CostBreakdown,
    pub memory: BranchSnapshot,
    pub script_source: Option<String>,
}

impl RunPlan {
    pub fn from_config(config: &RunConfig) -> Result<Self, RunError> {
        let contract = config.load_contract()?;
        let split = load_dataset(&config.dataset, &contract)?;
        Ok(Self {
            contract,
            split,
            profile: config.backend.profile.clone(),
            trainer: config.trainer_config(),
            max_attempts: config.training.max_attempts,
            rag: config.load_rag()?,
            parallelism: config.parallelism,
            train: true,
            memory: None,
            script_source: None,
        })
    }
}

pub fn make_runtime(kind: RuntimeKind) -> Arc<dyn Runtime> {
    match kind {
        RuntimeKind::System => Arc::new(SystemRuntime::new()),
        RuntimeKind::Logical => Arc::new(LogicalRuntime::new(Timestamp(0), 0x6d6f_636b)),
    }
}

fn log_calls(log: &mut Vec<OperationLogRecord>, calls: &[CallRecord], ctx: &CallContext, runtime: &dyn Runtime) {
    log.extend(calls.iter().map(|c| OperationLogRecord::from_call(c, ctx, runtime)));
}

fn evaluate_one(
    function: &MockFunction,
    example: &Example,
) -> (Result<InvocationOutcome, InvokeError>, Vec<CallRecord>) {
    function.evaluate(&example.arguments)
}

/// Runs training (unless skipped) and then evaluation on frozen memory.
pub fn execute(
    plan: &RunPlan,
    backend: Arc<dyn ChatBackend>,
    runtime: Arc<dyn Runtime>,
) -> Result<RunOutput, RunError> {
    let mut function = MockFunction::new(plan.contract.clone(), plan.profile.clone(), backend, runtime.clone())
        .with_max_attempts(plan.max_attempts);
    if let Some(snapshot) = &plan.memory {
        let memory = MemoryBranch::from_snapshot(snapshot.clone()).map_err(|e| RunError::Invalid(e.to_string()))?;
        function = function
            .with_memory(memory)
            .map_err(|e| RunError::Invalid(e.to_string()))?;
    }
    if let Some(source) = &plan.script_source {
        let script = SubstitutionScript::compile(source.clone(), 0, runtime.now())
            .map_err(|e| RunError::Invalid(format!("script: {e}")))?;
        function.install_script(script);
    }
    for material in &plan.rag {
        inject_rag(function.memory_mut(), material);
    }

    let mut log = Vec::new();
    let training = if plan.train {
        let truths: Vec<&Value> = plan.split.train.iter().map(|e| &e.truth).collect();
        let rt = runtime.clone();
        let mut observer = |entry: Option<&mockfn_core::trainer::EntryOutcome>, calls: Vec<CallRecord>| {
            let ctx = CallContext {
                phase: Some(Phase::Train),
                entry: entry.map(|e| e.index),
                ground_truth: entry.map(|e| truths[e.index].clone()),
                correct: entry.and_then(|e| e.correct),
            };
            log_calls(&mut log, &calls, &ctx, &*rt);
        };
        Some(train_observed(
            &mut function,
            &plan.split.train,
            &plan.trainer,
            &mut observer,
        ))
    } else {
        None
    };

    let eval = &plan.split.eval;
    let results: Vec<(Result<InvocationOutcome, InvokeError>, Vec<CallRecord>)> = if plan.parallelism <= 1 {
        eval.iter().map(|e| evaluate_one(&function, e)).collect()
    } else {
        let chunk = eval.len().div_ceil(plan.parallelism).max(1);
        let function = &function;
        std::thread::scope(|s| {
            let handles: Vec<_> = eval
                .chunks(chunk)
                .map(|part| s.spawn(move || part.iter().map(|e| evaluate_one(function, e)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("evaluation thread panicked"))
                .collect()
        })
    };

    let kind = plan.contract.task_kind();
    let mut predictions = Vec::with_capacity(eval.len());
    for (index, (example, (outcome, calls))) in eval.iter().zip(results).enumerate() {
        let mut p = Prediction {
            index,
            predicted: None,
            truth: example.truth.clone(),
            correct: None,
            served_by: None,
            attempts: 0,
            formally_correct_first_try: false,
            error: None,
        };
        match outcome {
            Ok(out) => {
                p.correct = should_reflect(
                    kind,
                    plan.trainer.error_threshold,
                    &out.invocation.results,
                    &example.truth,
                )
                .ok()
                .map(|wrong| !wrong);
                p.predicted = Some(out.invocation.results);
                p.served_by = Some(out.served_by);
                p.attempts = out.attempts;
                p.formally_correct_first_try = out.formally_correct_first_try;
            }
            Err(e) => {
                if let InvokeError::FormalFailure { attempts, .. } = &e {
                    p.attempts = *attempts;
                }
                p.error = Some(e.to_string());
            }
        }
        let ctx = CallContext {
            phase: Some(Phase::Eval),
            entry: Some(index),
            ground_truth: Some(example.truth.clone()),
            correct: p.correct,
        };
        log_calls(&mut log, &calls, &ctx, &*runtime);
        predictions.push(p);
    }

    let pairs: Vec<(Option<Value>, Value)> = predictions
        .iter()
        .map(|p| (p.predicted.clone(), p.truth.clone()))
        .collect();
    // the ratio is about LLM replies; script answers are left out
    let first_try: Vec<bool> = predictions
        .iter()
        .filter(|p| p.served_by != Some(ServedBy::Script))
        .map(|p| p.formally_correct_first_try)
        .collect();
    let metrics = compute_metrics(&pairs, &first_try);
    let usages: Vec<_> = log.iter().filter_map(|r| r.usage).collect();
    let cost = cost_report(&usages, &plan.profile);
    Ok(RunOutput {
        log,
        training,
        predictions,
        metrics,
        cost,
        memory: function.memory().snapshot(),
        script_source: function.script().map(|s| s.source.clone()),
    })
}

pub const LOG_FILE: &str = "log.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const COST_FILE: &str = "cost.json";
pub const TRAINING_FILE: &str = "training.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const MEMORY_FILE: &str = "memory.json";
pub const SCRIPT_FILE: &str = "script.txt";
pub const MANIFEST_FILE: &str = "run.json";

/// What produced a run directory; enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub train: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_file: Option<PathBuf>,
}

impl RunManifest {
    pub fn plan(&self) -> Result<RunPlan, RunError> {
        let mut plan = RunPlan::from_config(&self.config)?;
        plan.train = self.train;
        if let Some(path) = &self.memory {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            plan.memory = Some(
                BranchSnapshot::from_json(&text).map_err(|e| RunError::Invalid(format!("{}: {e}", path.display())))?,
            );
        }
        if let Some(path) = &self.script_file {
            plan.script_source = Some(fs::read_to_string(path).map_err(io_err(path))?);
        }
        Ok(plan)
    }

    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Invalid(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), RunError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, pretty(self)).map_err(io_err(&path))
    }
}

/// Serialized metrics exactly as written to disk.
pub fn metrics_bytes(metrics: &MetricsReport) -> String {
    pretty(metrics)
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifacts serialize");
    s.push('\n');
    s
}

pub fn write_artifacts(dir: &Path, out: &RunOutput) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))
    };
    let mut log = Vec::new();
    write_log(&mut log, &out.log).expect("writing to memory cannot fail");
    write(LOG_FILE, String::from_utf8(log).expect("JSON is UTF-8"))?;
    write(METRICS_FILE, metrics_bytes(&out.metrics))?;
    write(COST_FILE, pretty(&out.cost))?;
    write(MEMORY_FILE, out.memory.to_json())?;
    if let Some(t) = &out.training {
        write(TRAINING_FILE, pretty(t))?;
    }
    let mut lines = String::new();
    for p in &out.predictions {
        lines.push_str(&serde_json::to_string(p).expect("predictions serialize"));
        lines.push('\n');
    }
    write(PREDICTIONS_FILE, lines)?;
    let script = dir.join(SCRIPT_FILE);
    match &out.script_source {
        Some(src) => write(SCRIPT_FILE, src.clone())?,
        None if script.exists() => fs::remove_file(&script).map_err(io_err(&script))?,
        None => {}
    }
    Ok(())
}

pub fn read_run_log(path: &Path) -> Result<Vec<OperationLogRecord>, RunError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(read_log(BufReader::new(file))?)
}

/// Re-runs `plan` against the replies recorded in `log`.
pub fn replay(plan: &RunPlan, log: &[OperationLogRecord]) -> Result<RunOutput, RunError> {
    let backend: Arc<dyn ChatBackend> = match replay_backend(log) {
        Some(stub) => Arc::new(stub),
        None => Arc::new(mockfn_core::backend::StubBackend::new(vec![]).unwrap_or_else(|_| unreachable!())),
    };
    execute(plan, backend, make_runtime(RuntimeKind::Logical))
}

/// Plain-text summary of a run directory.
pub fn report(dir: &Path) -> Result<String, RunError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(io_err(&path))
    };
    let metrics: MetricsReport =
        serde_json::from_str(&read(METRICS_FILE)?).map_err(|e| RunError::Invalid(e.to_string()))?;
    let cost: CostBreakdown = serde_json::from_str(&read(COST_FILE)?).map_err(|e| RunError::Invalid(e.to_string()))?;
    let log = read_run_log(&dir.join(LOG_FILE))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    out.push_str(&format!("evaluated            {}\n", metrics.n_evaluated));
    out.push_str(&format!("accuracy             {}\n", fmt(metrics.accuracy)));
    out.push_str(&format!("rmse                 {}\n", fmt(metrics.rmse)));
    out.push_str(&format!("medae                {}\n", fmt(metrics.medae)));
    out.push_str(&format!(
        "formal correctness   {}\n",
        fmt(metrics.formal_correctness_ratio)
    ));
    out.push_str(&format!("logged calls         {}\n\n", log.len()));
    out.push_str(&format!(
        "{:<18} {:>6} {:>12} {:>12} {:>12} {:>10}\n",
        "category", "calls", "prompt", "completion", "total", "cost ($)"
    ));
    for c in &cost.categories {
        out.push_str(&format!(
            "{:<18} {:>6} {:>12} {:>12} {:>12} {:>10.2}\n",
            c.category.as_str(),
            c.calls,
            c.prompt_tokens,
            c.completion_tokens,
            c.total_tokens,
            c.cost
        ));
    }
    out.push_str(&format!(
        "{:<18} {:>6} {:>12} {:>12} {:>12} {:>10.2}\n",
        "total",
        cost.categories.iter().map(|c| c.calls).sum::<u64>(),
        cost.prompt_tokens,
        cost.completion_tokens,
        cost.total_tokens,
        cost.total_cost
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mockfn_core::backend::UsageCategory;

    fn output(script: Option<&str>) -> RunOutput {
        let memory = MemoryBranch::new(mockfn_core::memory::ChatMessage::system("s")).unwrap();
        RunOutput {
            log: vec![],
            training: None,
            predictions: vec![Prediction {
                index: 0,
                predicted: None,
                truth: Value::from("Lived"),
                correct: None,
                served_by: None,
                attempts: 3,
                formally_correct_first_try: false,
                error: Some("gave up".into()),
            }],
            metrics: compute_metrics(&[(None, Value::from("Lived"))], &[false]),
            cost: cost_report(&[], &BackendProfile::new("m")),
            memory: memory.snapshot(),
            script_source: script.map(String::from),
        }
    }

    #[test]
    fn artifacts_round_trip_and_stale_script_removed() {
        let dir = tempfile::tempdir().unwrap();
        write_artifacts(dir.path(), &output(Some("return 1;"))).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join(SCRIPT_FILE)).unwrap(), "return 1;");
        write_artifacts(dir.path(), &output(None)).unwrap();
        assert!(!dir.path().join(SCRIPT_FILE).exists());
        let line = fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
        assert_eq!(
            line,
            "{\"index\":0,\"truth\":\"Lived\",\"attempts\":3,\"formally_correct_first_try\":false,\"error\":\"gave up\"}\n"
        );
        let text = report(dir.path()).unwrap();
        assert!(text.contains("accuracy             0.0000"));
        assert!(text.contains(UsageCategory::ScriptGeneration.as_str()));
    }
}

//! Run configuration: one JSON document.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use mockfn_core::backend::{BackendProfile, ChatBackend, Matcher, StubBackend, StubReply, UsageCategory};
use mockfn_core::contract::FunctionContract;
use mockfn_core::error::BackendError;
use mockfn_core::rag::RagMaterial;
use mockfn_core::trainer::{RefinementPolicy, ScriptSettings, TrainerConfig};

use crate::dataset::DatasetSpec;
use crate::http::{OpenAiBackend, RetryPolicy};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn invalid(path: &Path, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.into(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Openai,
    Stub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyName {
    Replace,
    Compress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuntimeKind {
    /// Wall clock and randomized ids.
    System,
    /// Counter clock and sequential ids; runs are reproducible.
    Logical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrySettings {
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

fn default_retries() -> u32 {
    3
}
fn default_base_delay() -> u64 {
    500
}
fn default_timeout() -> u64 {
    120_000
}

impl Default for RetrySettings {
    fn default() -> Self {
        Self {
            max_retries: default_retries(),
            base_delay_ms: default_base_delay(),
            timeout_ms: default_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    pub profile: BackendProfile,
    /// For the stub kind: a JSON array of scripted replies.
    #[serde(default)]
    pub stub_script: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetrySettings,
}

/// One scripted stub reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubEntry {
    #[serde(default)]
    pub reply: Option<String>,
    #[serde(default)]
    pub fail: Option<String>,
    #[serde(default)]
    pub last_contains: Option<String>,
    #[serde(default)]
    pub category: Option<UsageCategory>,
}

impl StubEntry {
    fn into_script(self) -> Result<(Matcher, StubReply), String> {
        let reply = match (self.reply, self.fail) {
            (Some(r), None) => StubReply::Text(r),
            (None, Some(f)) => StubReply::Fail(BackendError::Scripted(f)),
            _ => return Err("each stub entry needs exactly one of \"reply\" and \"fail\"".into()),
        };
        let mut matchers = Vec::new();
        if let Some(s) = self.last_contains {
            matchers.push(Matcher::LastContains(s));
        }
        if let Some(c) = self.category {
            matchers.push(Matcher::Category(c));
        }
        let matcher = match matchers.len() {
            0 => Matcher::Any,
            1 => matchers.pop().expect("one matcher"),
            _ => Matcher::All(matchers),
        };
        Ok((matcher, reply))
    }
}

fn default_context_length() -> usize {
    20
}
fn default_policy() -> PolicyName {
    PolicyName::Replace
}
fn default_attempts() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    #[serde(default = "default_context_length")]
    pub context_length: usize,
    #[serde(default = "default_policy")]
    pub policy: PolicyName,
    #[serde(default)]
    pub error_threshold: f64,
    #[serde(default)]
    pub script: bool,
    #[serde(default = "default_attempts")]
    pub script_attempts: u32,
    /// Attempts per invocation before a formal failure.
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            context_length: default_context_length(),
            policy: default_policy(),
            error_threshold: 0.0,
            script: false,
            script_attempts: default_attempts(),
            max_attempts: default_attempts(),
        }
    }
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Path to the declarative contract file.
    pub contract: PathBuf,
    pub dataset: DatasetSpec,
    pub backend: BackendConfig,
    /// Profile for reflection, compression and script generation; the
    /// executor's profile when absent.
    #[serde(default)]
    pub reflector: Option<BackendProfile>,
    #[serde(default)]
    pub training: TrainingSettings,
    /// Reference material files, each a JSON object with id, level and documents.
    #[serde(default)]
    pub rag: Vec<PathBuf>,
    pub output_dir: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Defaults to logical for stub backends and system otherwise.
    #[serde(default)]
    pub runtime: Option<RuntimeKind>,
}

impl RunConfig {
    /// Reads a config and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut config: RunConfig = serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e))?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = &std::path::absolute(base).map_err(|e| invalid(path, e))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut config.contract);
        fix(&mut config.output_dir);
        config.dataset.resolve(base);
        config.rag.iter_mut().for_each(fix);
        if let Some(p) = config.backend.stub_script.as_mut() {
            fix(p);
        }
        config.validate().map_err(|m| invalid(path, m))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.backend.profile.validate().map_err(|e| e.to_string())?;
        if let Some(r) = &self.reflector {
            r.validate().map_err(|e| e.to_string())?;
        }
        if self.training.error_threshold.is_nan() || self.training.error_threshold < 0.0 {
            return Err("error_threshold must be non-negative".into());
        }
        if self.parallelism == 0 {
            return Err("parallelism must be at least 1".into());
        }
        if self.backend.kind == BackendKind::Stub && self.backend.stub_script.is_none() {
            return Err("the stub backend needs a stub_script".into());
        }
        Ok(())
    }

    pub fn runtime_kind(&self) -> RuntimeKind {
        self.runtime.unwrap_or(match self.backend.kind {
            BackendKind::Stub => RuntimeKind::Logical,
            BackendKind::Openai => RuntimeKind::System,
        })
    }

    pub fn load_contract(&self) -> Result<FunctionContract, ConfigError> {
        FunctionContract::from_json_str(&read(&self.contract)?).map_err(|e| invalid(&self.contract, e))
    }

    pub fn load_rag(&self) -> Result<Vec<RagMaterial>, ConfigError> {
        self.rag
            .iter()
            .map(|p| serde_json::from_str(&read(p)?).map_err(|e| invalid(p, e)))
            .collect()
    }

    pub fn reflector_profile(&self) -> BackendProfile {
        self.reflector.clone().unwrap_or_else(|| self.backend.profile.clone())
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.training;
        let policy = match t.policy {
            PolicyName::Replace => RefinementPolicy::Replace,
            PolicyName::Compress => RefinementPolicy::Compress,
        };
        let mut config = TrainerConfig::new(t.context_length, self.reflector_profile())
            .with_threshold(t.error_threshold)
            .with_policy(policy);
        if t.script {
            let mut s = ScriptSettings::new(self.reflector_profile());
            s.max_attempts = t.script_attempts;
            config = config.with_script(s);
        }
        config
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, ConfigError> {
        match self.backend.kind {
            BackendKind::Openai => {
                let r = &self.backend.retry;
                let retry = RetryPolicy {
                    max_retries: r.max_retries,
                    base_delay: Duration::from_millis(r.base_delay_ms),
                    timeout: Duration::from_millis(r.timeout_ms),
                    ..RetryPolicy::default()
                };
                let backend = OpenAiBackend::with_reqwest().map_err(|e| invalid(Path::new("backend"), e))?;
                Ok(Arc::new(backend.with_retry(retry)))
            }
            BackendKind::Stub => {
                let path = self
                    .backend
                    .stub_script
                    .as_deref()
                    .ok_or_else(|| invalid(Path::new("backend"), "missing stub_script"))?;
                let entries: Vec<StubEntry> = serde_json::from_str(&read(path)?).map_err(|e| invalid(path, e))?;
                let script = entries
                    .into_iter()
                    .map(StubEntry::into_script)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| invalid(path, e))?;
                Ok(Arc::new(StubBackend::new(script).map_err(|e| invalid(path, e))?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"contract": "c.json", "dataset": {"path": "d.csv", "label": "y"},
                "backend": {"profile": {"model_id": "gpt-4o-mini", "base_url": "https://api.openai.com/v1", "api_key_env": "OPENAI_API_KEY"}},
                "output_dir": "out"}"#,
        )
        .unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.contract, dir.path().join("c.json"));
        assert_eq!(c.dataset.path, dir.path().join("d.csv"));
        assert_eq!(c.training.context_length, 20);
        assert_eq!(c.training.policy, PolicyName::Replace);
        assert_eq!(c.runtime_kind(), RuntimeKind::System);
        assert_eq!(c.dataset.train_fraction, 0.8);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"contract": "c", "dataset": {"path": "d", "label": "y"}, "backend": {"profile": {"model_id": "m"}}, "output_dir": "o", "colour": 1}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"contract": "c", "dataset": {"path": "d", "label": "y"}, "backend": {"kind": "stub", "profile": {"model_id": "m"}}, "output_dir": "o"}"#).unwrap();
        assert!(RunConfig::load(&path).unwrap_err().to_string().contains("stub_script"));
    }

    #[test]
    fn stub_entries() {
        let e: StubEntry = serde_json::from_str(r#"{"reply": "x", "category": "reflection"}"#).unwrap();
        assert_eq!(e.into_script().unwrap().0, Matcher::Category(UsageCategory::Reflection));
        let e: StubEntry = serde_json::from_str(r#"{"reply": "x", "fail": "y"}"#).unwrap();
        assert!(e.into_script().is_err());
    }
}

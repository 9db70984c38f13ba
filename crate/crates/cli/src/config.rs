//! Pipeline configuration file (TOML) and `--set` overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use vnjp_core::analyze::{DEFAULT_BUCKET_WIDTH, DEFAULT_TARGET_FRACTION};
use vnjp_core::assemble::{SplitSpec, DEFAULT_INSTRUCTION};
use vnjp_core::corpus::{JaSegmentation, Side};
use vnjp_core::generate::{GenerationSettings, HttpBackendConfig, RetryPolicy};
use vnjp_core::metrics::{BleuTokenization, Smoothing};
use vnjp_core::retrieve::{DEFAULT_B, DEFAULT_K1, DEFAULT_TOP_K};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("--set: {0}")]
    Override(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub analyze: AnalyzeConfig,
    pub bm25: Bm25Config,
    pub backend: BackendConfig,
    pub split: SplitConfig,
    pub bleu: BleuConfig,
    pub export: ExportConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Corpus to process (`.tsv` or `.jsonl`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// CoT prompt template; the built-in one when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
    /// Zero-shot template for filling missing targets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_template: Option<PathBuf>,
    /// Separate demonstration pool; defaults to the corpus's non-flagged pairs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean_pool: Option<PathBuf>,
    /// Failures file name, relative to `out_dir`.
    pub failures: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            input: None,
            out_dir: PathBuf::from("out"),
            template: None,
            baseline_template: None,
            clean_pool: None,
            failures: PathBuf::from("failures.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub target_fraction: f64,
    pub side: Side,
    pub ja_segmentation: JaSegmentation,
    pub bucket_width: u64,
    /// Fixed threshold instead of targeting `target_fraction`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            target_fraction: DEFAULT_TARGET_FRACTION,
            side: Side::Ja,
            ja_segmentation: JaSegmentation::ScriptRun,
            bucket_width: DEFAULT_BUCKET_WIDTH,
            threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Config {
    pub k1: f64,
    pub b: f64,
    pub top_k: usize,
}

impl Default for Bm25Config {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub response_path: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
    pub timeout_secs: u64,
    pub max_new_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Fill absent Japanese targets before analysis (pipeline only).
    pub translate_missing: bool,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let gen = GenerationSettings::default();
        Self {
            kind: BackendKind::Http,
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-4o-mini".into(),
            response_path: "choices.0.message.content".into(),
            max_in_flight: gen.max_in_flight,
            max_retries: gen.retry.max_retries,
            initial_backoff_ms: gen.retry.initial_backoff_ms,
            backoff_multiplier: gen.retry.multiplier,
            timeout_secs: 120,
            max_new_tokens: gen.max_new_tokens,
            seed: None,
            translate_missing: true,
        }
    }
}

impl BackendConfig {
    pub fn http(&self, api_key: Option<String>) -> HttpBackendConfig {
        HttpBackendConfig {
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            response_path: self.response_path.clone(),
            api_key,
            timeout: Duration::from_secs(self.timeout_secs),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train: s.train,
            val: s.val,
            test: s.test,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuConfig {
    pub language: Side,
    pub ja_segmentation: JaSegmentation,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self {
            language: Side::Ja,
            ja_segmentation: JaSegmentation::ScriptRun,
            smoothing: Smoothing::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub instruction: String,
    pub keep_flagged_baseline: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.into(),
            keep_flagged_baseline: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Applies one `section.key=value` override. The value is read as a TOML
    /// literal when it parses as one, otherwise as a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| ConfigError::Override(format!("expected section.key=value, got {assignment:?}")))?;
        let (section, field) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| ConfigError::Override(format!("expected section.key, got {key:?}")))?;
        let raw = raw.trim();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.to_owned()));

        let mut root = toml::Table::try_from(&*self).expect("config always serializes");
        let table = root
            .get_mut(section)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| ConfigError::Override(format!("unknown section {section:?}")))?;
        table.insert(field.to_owned(), value);
        *self = root
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Override(format!("{key}: {}", e.message())))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let a = &self.analyze;
        if !(a.target_fraction > 0.0 && a.target_fraction < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "analyze.target_fraction must be in (0, 1), got {}",
                a.target_fraction
            )));
        }
        if a.bucket_width == 0 {
            return Err(ConfigError::Invalid("analyze.bucket_width must be >= 1".into()));
        }
        if !(self.bm25.k1 >= 0.0 && (0.0..=1.0).contains(&self.bm25.b)) {
            return Err(ConfigError::Invalid("bm25 needs k1 >= 0 and 0 <= b <= 1".into()));
        }
        if self.backend.max_in_flight == 0 {
            return Err(ConfigError::Invalid("backend.max_in_flight must be >= 1".into()));
        }
        self.split_spec()
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("split: {e}")))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train: self.split.train,
            val: self.split.val,
            test: self.split.test,
            seed: self.split.seed,
        }
    }

    pub fn generation_settings(&self, exclude_same_id: bool) -> GenerationSettings {
        GenerationSettings {
            max_new_tokens: self.backend.max_new_tokens,
            seed: self.backend.seed,
            retry: RetryPolicy {
                max_retries: self.backend.max_retries,
                initial_backoff_ms: self.backend.initial_backoff_ms,
                multiplier: self.backend.backoff_multiplier,
            },
            max_in_flight: self.backend.max_in_flight,
            top_k: self.bm25.top_k,
            exclude_same_id,
        }
    }

    pub fn bleu_tokenization(&self) -> BleuTokenization {
        BleuTokenization {
            language: self.bleu.language,
            ja_segmentation: self.bleu.ja_segmentation,
        }
    }
}

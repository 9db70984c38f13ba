//! Chain-of-thought synthetic translation of flagged sentences.
//!
//! Each flagged source gets one few-shot prompt (top-3 BM25 demonstrations,
//! itself excluded) and two completions, at temperatures 0.7 and 0.85. The
//! answer is whatever follows the last `FINAL:` marker in the output.

mod backend;
mod prompt;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use backend::{
    response_pointer, BackendError, BackendErrorKind, GenerationBackend, GenerationRequest, HttpBackend,
    HttpBackendConfig, MockBackend, API_KEY_ENV,
};
pub use prompt::{assemble_prompt, PromptBundle, PromptTemplate, TemplateError, FINAL_MARKER, MAX_DEMONSTRATIONS};

use crate::corpus::{CorpusError, ParallelCorpus, Provenance, SentencePair};
use crate::retrieve::{top_k_filtered, Bm25Index, RetrievedExample, DEFAULT_TOP_K};

/// Sampling temperatures for the two synthetic translations.
pub const TEMPERATURES: [f64; 2] = [0.7, 0.85];
/// Temperature used for first-pass baseline translation.
pub const BASELINE_TEMPERATURE: f64 = 0.0;

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("temperature {0} outside [0, 2]")]
    InvalidTemperature(f64),
    #[error("backend failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend rejected the request: {message}")]
    Rejected { message: String },
    #[error("no {FINAL_MARKER} answer in model output")]
    Extraction { raw_output: String },
    #[error("every flagged sentence failed ({} failures); backend looks unavailable", failures.len())]
    AllFailed { failures: Vec<FailureRecord> },
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl GenerateError {
    /// Short machine-readable label used in failure records.
    pub fn kind(&self) -> &'static str {
        match self {
            GenerateError::InvalidTemperature(_) => "invalid_temperature",
            GenerateError::Transport { .. } => "transport",
            GenerateError::Rejected { .. } => "rejected",
            GenerateError::Extraction { .. } => "extraction",
            GenerateError::AllFailed { .. } => "all_failed",
            GenerateError::Template(_) => "template",
            GenerateError::Corpus(_) => "corpus",
        }
    }

    fn is_backend_failure(&self) -> bool {
        matches!(self, GenerateError::Transport { .. } | GenerateError::Rejected { .. })
    }

    fn audit_message(&self) -> String {
        match self {
            GenerateError::Extraction { raw_output } => format!("{self}; raw output: {raw_output}"),
            other => other.to_string(),
        }
    }
}

/// One line of the failures file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub id: u64,
    pub error_kind: String,
    pub message: String,
}

impl FailureRecord {
    fn new(id: u64, error: &GenerateError) -> Self {
        Self {
            id,
            error_kind: error.kind().to_owned(),
            message: error.audit_message(),
        }
    }
}

/// Text after the last `FINAL:` marker, trimmed, with line breaks joined by
/// single spaces.
pub fn extract_final_translation(raw_output: &str) -> Result<String, GenerateError> {
    let extraction_error = || GenerateError::Extraction {
        raw_output: raw_output.to_owned(),
    };
    let start = raw_output.rfind(FINAL_MARKER).ok_or_else(extraction_error)?;
    let tail = &raw_output[start + FINAL_MARKER.len()..];
    let joined = tail
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if joined.is_empty() {
        return Err(extraction_error());
    }
    Ok(joined)
}

/// Exponential backoff for transient backend failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self.initial_backoff_ms as f64 * self.multiplier.powi(retry as i32);
        Duration::from_millis(ms.round() as u64)
    }
}

/// Sleeps between retries. Tests substitute a recording stub.
pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Knobs shared by baseline and refinement generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub max_new_tokens: u32,
    pub seed: Option<u64>,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub top_k: usize,
    /// Also exclude the pool document whose id equals the query pair's id.
    /// Only meaningful when the pool shares the corpus id space.
    pub exclude_same_id: bool,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            max_new_tokens: 1024,
            seed: None,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            top_k: DEFAULT_TOP_K,
            exclude_same_id: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub raw_output: String,
    pub final_translation: String,
    pub temperature: f64,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

/// One completion with retries on transient errors, followed by answer
/// extraction.
pub fn generate_translation(
    backend: &dyn GenerationBackend,
    prompt: &PromptBundle,
    temperature: f64,
    settings: &GenerationSettings,
    sleeper: &dyn Sleeper,
) -> Result<GenerationResult, GenerateError> {
    if !(0.0..=2.0).contains(&temperature) {
        return Err(GenerateError::InvalidTemperature(temperature));
    }
    let request = GenerationRequest {
        prompt,
        temperature,
        max_new_tokens: settings.max_new_tokens,
        seed: settings.seed,
    };

    let started = Instant::now();
    let mut attempts = 0u32;
    let raw_output = loop {
        attempts += 1;
        match backend.complete(&request) {
            Ok(text) => break text,
            Err(err) if err.kind == BackendErrorKind::Permanent => {
                return Err(GenerateError::Rejected { message: err.message });
            }
            Err(err) => {
                if attempts > settings.retry.max_retries {
                    return Err(GenerateError::Transport {
                        attempts,
                        message: err.message,
                    });
                }
                log::debug!("transient backend error (attempt {attempts}): {}", err.message);
                sleeper.sleep(settings.retry.backoff(attempts - 1));
            }
        }
    };

    let final_translation = extract_final_translation(&raw_output)?;
    Ok(GenerationResult {
        final_translation,
        raw_output,
        temperature,
        backend_id: backend.backend_id().to_owned(),
        latency_ms: started.elapsed().as_millis() as u64,
        attempts,
    })
}

/// Counts every `complete` call, retries included.
struct CountingBackend<'a> {
    inner: &'a dyn GenerationBackend,
    calls: AtomicUsize,
}

impl GenerationBackend for CountingBackend<'_> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
}

/// Runs `job` over `0..count` on up to `workers` threads and returns results
/// in index order.
fn run_ordered<T: Send>(count: usize, workers: usize, job: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, count.max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= count {
                    break;
                }
                let result = job(i);
                slots.lock().expect("result slots poisoned")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RefineOutcome {
    /// Two pairs per successfully refined source, in flagged order (t1, t2).
    pub synthetic: Vec<SentencePair>,
    pub failures: Vec<FailureRecord>,
    /// Ids of flagged pairs that produced both translations.
    pub refined_ids: Vec<u64>,
    /// Backend calls including retries.
    pub backend_calls: usize,
}

/// Generates two CoT translations for every flagged pair.
///
/// Synthetic ids start above the corpus's largest id: the `i`-th flagged pair
/// (in corpus order) owns ids `max + 2i + 1` (t1) and `max + 2i + 2` (t2),
/// whether or not its siblings succeed. A pair whose generation fails is
/// recorded in `failures` and produces nothing. Fails as a whole only when
/// every flagged pair failed on the backend itself.
pub fn refine_flagged(
    corpus: &ParallelCorpus,
    index: &Bm25Index,
    backend: &dyn GenerationBackend,
    template: &PromptTemplate,
    settings: &GenerationSettings,
    sleeper: &dyn Sleeper,
) -> Result<RefineOutcome, GenerateError> {
    let flagged: Vec<&SentencePair> = corpus.flagged().collect();
    if flagged.is_empty() {
        return Ok(RefineOutcome::default());
    }
    let base_id = corpus.max_id().unwrap_or(0);
    let counting = CountingBackend {
        inner: backend,
        calls: AtomicUsize::new(0),
    };

    let results = run_ordered(flagged.len(), settings.max_in_flight, |i| {
        let pair = flagged[i];
        refine_one(pair, index, &counting, template, settings, sleeper).map(|[t1, t2]| {
            let first = base_id + 2 * i as u64 + 1;
            [
                SentencePair::new(first, &pair.source_vi, Some(&t1)).with_provenance(Provenance::SyntheticT1),
                SentencePair::new(first + 1, &pair.source_vi, Some(&t2)).with_provenance(Provenance::SyntheticT2),
            ]
        })
    });

    let mut outcome = RefineOutcome::default();
    let mut backend_failures = 0;
    for (pair, result) in flagged.iter().zip(results) {
        match result {
            Ok(synthetic) => {
                outcome.refined_ids.push(pair.id);
                outcome.synthetic.extend(synthetic);
            }
            Err(err) => {
                log::warn!("pair {}: refinement failed: {err}", pair.id);
                if err.is_backend_failure() {
                    backend_failures += 1;
                }
                outcome.failures.push(FailureRecord::new(pair.id, &err));
            }
        }
    }
    outcome.backend_calls = counting.calls.load(Ordering::Relaxed);

    if backend_failures == flagged.len() {
        return Err(GenerateError::AllFailed {
            failures: outcome.failures,
        });
    }
    Ok(outcome)
}

/// Few-shot demonstrations for `pair`: the best `top_k` pool entries whose
/// source differs from the query (and, if configured, whose id differs).
pub fn demonstrations_for(
    pair: &SentencePair,
    index: &Bm25Index,
    settings: &GenerationSettings,
) -> Vec<RetrievedExample> {
    let query = pair.source_vi.as_str();
    top_k_filtered(
        index,
        query,
        settings.top_k.min(MAX_DEMONSTRATIONS),
        |doc_id, source| source != query && !(settings.exclude_same_id && doc_id == pair.id),
    )
}

fn refine_one(
    pair: &SentencePair,
    index: &Bm25Index,
    backend: &dyn GenerationBackend,
    template: &PromptTemplate,
    settings: &GenerationSettings,
    sleeper: &dyn Sleeper,
) -> Result<[String; 2], GenerateError> {
    let examples = demonstrations_for(pair, index, settings);
    let prompt = assemble_prompt(&pair.source_vi, &examples, template)?;

    let mut translations = [String::new(), String::new()];
    for (slot, temperature) in translations.iter_mut().zip(TEMPERATURES) {
        let result = generate_translation(backend, &prompt, temperature, settings, sleeper)?;
        *slot = normalized_answer(&result)?;
    }
    Ok(translations)
}

fn normalized_answer(result: &GenerationResult) -> Result<String, GenerateError> {
    let text = crate::corpus::normalize_text(&result.final_translation);
    if text.is_empty() {
        return Err(GenerateError::Extraction {
            raw_output: result.raw_output.clone(),
        });
    }
    Ok(text)
}

/// Fills absent Japanese sides with a zero-shot translation at temperature
/// 0. Pairs whose translation fails are left out of the returned corpus and
/// reported as failures.
pub fn translate_missing(
    corpus: &ParallelCorpus,
    backend: &dyn GenerationBackend,
    template: &PromptTemplate,
    settings: &GenerationSettings,
    sleeper: &dyn Sleeper,
) -> Result<(ParallelCorpus, Vec<FailureRecord>), GenerateError> {
    let pairs = corpus.pairs();
    let results = run_ordered(pairs.len(), settings.max_in_flight, |i| {
        let pair = &pairs[i];
        if pair.target_ja.is_some() {
            return Ok(None);
        }
        let prompt = assemble_prompt(&pair.source_vi, &[], template)?;
        let result = generate_translation(backend, &prompt, BASELINE_TEMPERATURE, settings, sleeper)?;
        normalized_answer(&result).map(Some)
    });

    let mut kept = Vec::with_capacity(pairs.len());
    let mut failures = Vec::new();
    for (pair, result) in pairs.iter().zip(results) {
        match result {
            Ok(None) => kept.push(pair.clone()),
            Ok(Some(ja)) => {
                let mut filled = pair.clone();
                filled.target_ja = Some(ja);
                kept.push(filled);
            }
            Err(err) => {
                log::warn!("pair {}: baseline translation failed: {err}", pair.id);
                failures.push(FailureRecord::new(pair.id, &err));
            }
        }
    }
    let mut out = ParallelCorpus::new(kept)?;
    out.metadata = corpus.metadata.clone();
    Ok((out, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extract_simple() {
        assert_eq!(
            extract_final_translation("step1…\nstep2…\nFINAL: こんにちは").unwrap(),
            "こんにちは"
        );
    }

    #[test]
    fn extract_last_marker_wins() {
        assert_eq!(
            extract_final_translation("FINAL: draft\n…revised…\nFINAL: ありがとう").unwrap(),
            "ありがとう"
        );
    }

    #[test]
    fn extract_joins_lines() {
        assert_eq!(
            extract_final_translation("FINAL:\n  一行目\n\n二行目  \n").unwrap(),
            "一行目 二行目"
        );
    }

    #[test]
    fn extract_errors_carry_raw_output() {
        for raw in ["no marker here", "reasoning\nFINAL:   \n"] {
            match extract_final_translation(raw) {
                Err(GenerateError::Extraction { raw_output }) => assert_eq!(raw_output, raw),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        let delays: Vec<u64> = (0..3).map(|r| p.backoff(r).as_millis() as u64).collect();
        assert_eq!(delays, vec![500, 1000, 2000]);
    }

    #[test]
    fn ordered_runner_keeps_index_order() {
        let out = run_ordered(50, 8, |i| {
            std::thread::sleep(Duration::from_micros(((50 - i) * 20) as u64));
            i * 2
        });
        assert_eq!(out, (0..50).map(|i| i * 2).collect::<Vec<_>>());
        assert!(run_ordered(0, 4, |i| i).is_empty());
    }
}

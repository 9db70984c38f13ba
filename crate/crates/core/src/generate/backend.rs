//! Generation backends: the trait, an offline deterministic mock, and a
//! chat-completions HTTP client.

use std::time::Duration;

use serde_json::{json, Value};

use super::prompt::PromptBundle;

pub const API_KEY_ENV: &str = "VNJP_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendErrorKind {
    /// Timeouts, connection failures, HTTP 429 and 5xx. Retried.
    Transient,
    /// Anything retrying cannot fix (4xx, malformed responses).
    Permanent,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub message: String,
}

impl BackendError {
    pub fn transient(message: impl Into<String>) -> Self {
        Self {
            kind: BackendErrorKind::Transient,
            message: message.into(),
        }
    }

    pub fn permanent(message: impl Into<String>) -> Self {
        Self {
            kind: BackendErrorKind::Permanent,
            message: message.into(),
        }
    }
}

/// One completion call.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a PromptBundle,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub seed: Option<u64>,
}

/// Anything that turns a prompt into raw model text.
pub trait GenerationBackend: Send + Sync {
    /// Stable identifier recorded with every result.
    fn backend_id(&self) -> &str;

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for &B {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Offline backend whose output is a pure function of the prompt and
/// temperature: the query's characters reversed, tagged with the temperature.
///
/// ```text
/// reasoning: <k> demonstrations, <c> query chars
/// FINAL: <reversed query> [t=0.70]
/// ```
#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub const ID: &'static str = "mock-reverse/1";

    /// The translation this backend produces for a query and temperature.
    pub fn expected_translation(query_vi: &str, temperature: f64) -> String {
        let reversed: String = query_vi.chars().rev().collect();
        format!("{} [t={temperature:.2}]", reversed.trim())
    }
}

impl GenerationBackend for MockBackend {
    fn backend_id(&self) -> &str {
        Self::ID
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let prompt = request.prompt;
        Ok(format!(
            "reasoning: {} demonstrations, {} query chars\nFINAL: {}",
            prompt.demonstrations.len(),
            prompt.query_vi.chars().count(),
            Self::expected_translation(&prompt.query_vi, request.temperature)
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpBackendConfig {
    /// e.g. `https://api.example.com/v1`; requests go to `<base_url>/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Dotted path (`choices.0.message.content`) or JSON pointer to the text.
    pub response_path: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

/// Chat-completions style HTTP backend.
///
/// Request body: `{model, messages: [{role, content}...], temperature,
/// max_tokens, seed?}`.
pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    pointer: String,
    config: HttpBackendConfig,
    id: String,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        let endpoint = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let pointer = response_pointer(&config.response_path);
        let id = format!("http:{}", config.model);
        Self {
            agent,
            endpoint,
            pointer,
            config,
            id,
        }
    }

    /// The JSON body sent for `request`.
    pub fn request_body(&self, request: &GenerationRequest<'_>) -> Value {
        let mut messages = Vec::new();
        if !request.prompt.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": request.prompt.system_text}));
        }
        messages.push(json!({"role": "user", "content": request.prompt.user_text}));
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        });
        if let Some(seed) = request.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

/// `choices.0.message.content` -> `/choices/0/message/content`
pub fn response_pointer(path: &str) -> String {
    if path.starts_with('/') || path.is_empty() {
        path.to_owned()
    } else {
        path.split('.').fold(String::new(), |mut acc, part| {
            acc.push('/');
            acc.push_str(&part.replace('~', "~0").replace('/', "~1"));
            acc
        })
    }
}

impl GenerationBackend for HttpBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        match call.send_json(self.request_body(request)) {
            Ok(response) => {
                let value: Value = response
                    .into_json()
                    .map_err(|e| BackendError::transient(format!("reading response body: {e}")))?;
                match value.pointer(&self.pointer) {
                    Some(Value::String(text)) => Ok(text.clone()),
                    _ => Err(BackendError::permanent(format!(
                        "no string at response path {}",
                        self.config.response_path
                    ))),
                }
            }
            Err(ureq::Error::Status(code, response)) => {
                let body = response.into_string().unwrap_or_default();
                let snippet: String = body.chars().take(200).collect();
                let message = format!("HTTP {code}: {snippet}");
                if code == 429 || code >= 500 {
                    Err(BackendError::transient(message))
                } else {
                    Err(BackendError::permanent(message))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(BackendError::transient(t.to_string())),
        }
    }
}

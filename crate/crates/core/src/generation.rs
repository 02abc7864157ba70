//! Prompt assembly, token accounting, refusal detection and generator backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::corpus::{contains_answer, normalize_text, Paragraph, QuestionExample};

pub const GUARDED_REFUSAL: &str = "I don't know.";
pub const REFUSAL_MESSAGE: &str = "I cannot answer that.";
pub const SIM_WRONG_ANSWER: &str = "unverified claim";
pub const SIM_FABRICATION: &str = "fabricated detail";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Guarded,
    Auto,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub answer_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl GenerationOutput {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Response(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Everything a backend may look at for one generation call. Remote backends
/// only read `prompt`; the simulator reads the structured fields.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub mode: PromptMode,
    pub passages: &'a [&'a Paragraph],
    pub example: &'a QuestionExample,
    pub prompt: &'a str,
}

pub trait GeneratorBackend: Send + Sync {
    fn name(&self) -> &str;
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<GenerationOutput, BackendError>;
}

pub fn assemble_prompt(mode: PromptMode, passages: &[&Paragraph], question: &str) -> String {
    let context = passages
        .iter()
        .map(|p| p.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    match mode {
        PromptMode::Guarded => format!(
            "You are a careful question-answering assistant.\n\
             Use ONLY the information in CONTEXT to answer the QUESTION.\n\
             If the answer is not in CONTEXT, respond with: \"I don't know.\"\n\
             \n\
             CONTEXT:\n\
             {context}\n\
             \n\
             QUESTION:\n\
             {question}\n\
             \n\
             Answer (one short sentence):"
        ),
        PromptMode::Auto => format!(
            "Answer the QUESTION using the CONTEXT below.\n\
             \n\
             CONTEXT:\n\
             {context}\n\
             \n\
             QUESTION:\n\
             {question}\n\
             \n\
             Answer:"
        ),
    }
}

/// Whitespace-separated chunk count.
pub fn count_tokens(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

/// Empty answers and answers opening with a refusal phrase count as refusals.
pub fn detect_refusal(answer_text: &str) -> bool {
    let norm = normalize_text(answer_text);
    if norm.is_empty() {
        return true;
    }
    // "don't" normalizes to "dont"; also accept the spaced form some
    // tokenizers and models produce.
    ["i dont know", "i don t know", "i cannot answer"]
        .iter()
        .any(|marker| norm.starts_with(marker))
}

/// Deterministic stand-in for an LLM. Correctness depends only on whether a
/// passage contains a gold answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulatedBackend;

pub fn simulate_generate(mode: PromptMode, passages: &[&Paragraph], example: &QuestionExample) -> GenerationOutput {
    let prompt = assemble_prompt(mode, passages, &example.question);
    simulate_with_prompt(mode, passages, example, &prompt)
}

fn simulate_with_prompt(
    mode: PromptMode,
    passages: &[&Paragraph],
    example: &QuestionExample,
    prompt: &str,
) -> GenerationOutput {
    let hit = passages
        .iter()
        .any(|p| contains_answer(&p.text, &example.gold_answers));
    let answer = match (mode, hit) {
        (_, true) => example.gold_answers[0].as_str(),
        (PromptMode::Guarded, false) => GUARDED_REFUSAL,
        (PromptMode::Auto, false) if example.answerable => SIM_WRONG_ANSWER,
        (PromptMode::Auto, false) => SIM_FABRICATION,
    };
    GenerationOutput {
        answer_text: answer.to_string(),
        prompt_tokens: count_tokens(prompt),
        completion_tokens: count_tokens(answer),
    }
}

impl GeneratorBackend for SimulatedBackend {
    fn name(&self) -> &str {
        "sim"
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<GenerationOutput, BackendError> {
        Ok(simulate_with_prompt(req.mode, req.passages, req.example, req.prompt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Total attempts per prompt, including the first.
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Upper bound on concurrent in-flight requests during a sweep.
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4.1-nano".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            temperature: 0.0,
            max_tokens: 64,
            max_attempts: 3,
            backoff_ms: 500,
            timeout_secs: 60,
            max_in_flight: 4,
        }
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: HttpConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        Ok(Self::with_key(config, key))
    }

    pub fn with_key(config: HttpConfig, api_key: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, api_key, agent }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    pub fn request_body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }

    fn attempt(&self, url: &str, body: &serde_json::Value) -> Result<GenerationOutput, Attempt> {
        let resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| Attempt::Transient(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Transient(format!("HTTP {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(BackendError::Status { status, body: text }));
        }
        parse_completion(&text).map_err(Attempt::Fatal)
    }
}

enum Attempt {
    Transient(String),
    Fatal(BackendError),
}

fn parse_completion(body: &str) -> Result<GenerationOutput, BackendError> {
    #[derive(Deserialize)]
    struct Resp {
        choices: Vec<Choice>,
        usage: Usage,
    }
    #[derive(Deserialize)]
    struct Choice {
        message: Msg,
    }
    #[derive(Deserialize)]
    struct Msg {
        #[serde(default)]
        content: Option<String>,
    }
    #[derive(Deserialize)]
    struct Usage {
        prompt_tokens: u64,
        completion_tokens: u64,
    }
    let resp: Resp = serde_json::from_str(body).map_err(|e| BackendError::Response(e.to_string()))?;
    let choice = resp
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Response("no choices in response".into()))?;
    Ok(GenerationOutput {
        answer_text: choice.message.content.unwrap_or_default(),
        prompt_tokens: resp.usage.prompt_tokens,
        completion_tokens: resp.usage.completion_tokens,
    })
}

impl GeneratorBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<GenerationOutput, BackendError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = self.request_body(req.prompt);
        let attempts = self.config.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(&url, &body) {
                Ok(out) => return Ok(out),
                Err(Attempt::Fatal(e)) => {
                    log::error!("{e}");
                    return Err(e);
                }
                Err(Attempt::Transient(msg)) => {
                    log::warn!("attempt {} of {attempts} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(BackendError::Exhausted { attempts, message: last })
    }
}

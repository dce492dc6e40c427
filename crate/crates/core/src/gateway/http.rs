//! OpenAI-compatible completions transport with retry.
//!
//! Transient failures (HTTP 429, 5xx, transport errors) retry with
//! exponential backoff and jitter up to a configured attempt cap; other 4xx
//! statuses fail immediately with the status and a body excerpt.

use std::time::Duration;

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};

use super::{CompletionBackend, CompletionResult, FinishReason, GenerationParams, Usage};

pub const ENV_API_KEY: &str = "LM_API_KEY";
pub const ENV_BASE_URL: &str = "LM_BASE_URL";
pub const ENV_MODEL: &str = "LM_MODEL";

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
const DEFAULT_MODEL: &str = "davinci";
const BODY_EXCERPT_LEN: usize = 300;

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Fractional jitter applied to each backoff, e.g. 0.25 for ±25%.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    fn backoff_ms(&self, attempt: u32) -> u64 {
        let base = self
            .initial_backoff_ms
            .saturating_mul(1u64 << attempt.min(20))
            .min(self.max_backoff_ms);
        if self.jitter <= 0.0 {
            return base;
        }
        let spread = (base as f64 * self.jitter) as i64;
        if spread == 0 {
            return base;
        }
        let offset = rand::rng().random_range(-spread..=spread);
        base.saturating_add_signed(offset)
    }
}

#[derive(Clone, Debug)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    /// Read endpoint settings from the environment. The credential comes
    /// from an env var only, never a flag, so it cannot leak through
    /// process listings.
    pub fn from_env() -> Result<Self> {
        let api_key = std::env::var(ENV_API_KEY).map_err(|_| Error::MissingEnv {
            var: ENV_API_KEY.to_string(),
        })?;
        Ok(HttpConfig {
            base_url: std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string()),
            api_key,
            model: std::env::var(ENV_MODEL).unwrap_or_else(|_| DEFAULT_MODEL.to_string()),
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        })
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChoiceBody {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize, Default)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<ChoiceBody>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

enum AttemptError {
    Retryable(String),
    Fatal(Error),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(config.timeout)
            .build();
        HttpBackend { config, agent }
    }

    pub fn from_env() -> Result<Self> {
        Ok(Self::new(HttpConfig::from_env()?))
    }

    fn endpoint(&self) -> String {
        format!("{}/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn request_body(&self, prompt: &str, params: &GenerationParams) -> String {
        let mut body = json!({
            "model": self.config.model,
            "prompt": prompt,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "frequency_penalty": params.frequency_penalty,
            "presence_penalty": params.presence_penalty,
            "max_tokens": params.max_tokens,
            "n": params.num_candidates,
        });
        if !params.stop.is_empty() {
            body["stop"] = json!(params.stop);
        }
        body.to_string()
    }

    fn attempt(&self, prompt: &str, params: &GenerationParams) -> std::result::Result<CompletionResult, AttemptError> {
        let body = self.request_body(prompt, params);
        let response = self
            .agent
            .post(&self.endpoint())
            .set("Authorization", &format!("Bearer {}", self.config.api_key))
            .set("Content-Type", "application/json")
            .send_string(&body);

        let response = match response {
            Ok(resp) => resp,
            Err(ureq::Error::Status(status, resp)) => {
                let excerpt = excerpt(resp.into_string().unwrap_or_default());
                if status == 429 || status >= 500 {
                    return Err(AttemptError::Retryable(format!("HTTP {status}: {excerpt}")));
                }
                return Err(AttemptError::Fatal(Error::Http {
                    status,
                    body_excerpt: excerpt,
                }));
            }
            Err(ureq::Error::Transport(t)) => {
                return Err(AttemptError::Retryable(format!("transport: {t}")));
            }
        };

        let text = response
            .into_string()
            .map_err(|e| AttemptError::Retryable(format!("read body: {e}")))?;
        let parsed: CompletionBody = serde_json::from_str(&text).map_err(|e| {
            AttemptError::Fatal(Error::Endpoint {
                message: format!("malformed completion response: {e}; body: {}", excerpt(text.clone())),
            })
        })?;
        let first = parsed.choices.into_iter().next().ok_or_else(|| {
            AttemptError::Fatal(Error::Endpoint {
                message: "completion response carried no choices".into(),
            })
        })?;
        let usage = parsed.usage.unwrap_or_default();
        Ok(CompletionResult {
            text: first.text,
            finish_reason: FinishReason::from_endpoint(first.finish_reason.as_deref().unwrap_or("")),
            usage: Usage {
                prompt_tokens: usage.prompt_tokens,
                completion_tokens: usage.completion_tokens,
            },
            attempts: 0, // filled in by the retry loop
        })
    }
}

fn excerpt(body: String) -> String {
    let mut s = body.trim().to_string();
    if s.len() > BODY_EXCERPT_LEN {
        let mut cut = BODY_EXCERPT_LEN;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
        s.push('…');
    }
    s
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<CompletionResult> {
        let mut last_cause = String::new();
        for attempt in 0..self.config.retry.max_attempts {
            match self.attempt(prompt, params) {
                Ok(mut result) => {
                    result.attempts = attempt + 1;
                    return Ok(result);
                }
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Retryable(cause)) => {
                    last_cause = cause;
                    if attempt + 1 < self.config.retry.max_attempts {
                        let backoff = self.config.retry.backoff_ms(attempt);
                        std::thread::sleep(Duration::from_millis(backoff));
                    }
                }
            }
        }
        Err(Error::AttemptsExhausted {
            attempts: self.config.retry.max_attempts,
            last_cause,
        })
    }

    fn name(&self) -> &'static str {
        "http"
    }
}

//! Live provider clients over HTTP.
//!
//! Two wire styles cover the hosted APIs this toolkit talks to: the
//! OpenAI-compatible chat-completions shape (OpenAI, DeepSeek, local
//! Ollama, most gateways) and the Anthropic messages shape. Credentials
//! come from the environment only — `<PROVIDER>_API_KEY`, uppercased — and
//! are never read from config files.

use std::env;
use std::time::Duration;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::client::{GenerateError, Generation, GenerationParams, ProviderClient};

/// Which request/response shape a provider speaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WireStyle {
    OpenAiChat,
    AnthropicMessages,
}

/// A blocking HTTP client for one provider.
pub struct HttpProviderClient {
    provider: String,
    base_url: String,
    api_key: Option<String>,
    style: WireStyle,
    http: reqwest::blocking::Client,
}

/// The environment variable that holds a provider's API key:
/// `openai` -> `OPENAI_API_KEY`.
pub fn api_key_var(provider: &str) -> String {
    let mut var: String = provider
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    var.push_str("_API_KEY");
    var
}

fn base_url_var(provider: &str) -> String {
    api_key_var(provider).replace("_API_KEY", "_BASE_URL")
}

/// Builds a client for a known provider name, or for any provider that
/// sets `<PROVIDER>_BASE_URL` (assumed OpenAI-compatible). Known hosted
/// providers require their key; local Ollama does not.
pub fn client_for_provider(provider: &str) -> Result<HttpProviderClient> {
    let name = provider.to_ascii_lowercase();
    let (default_base, style, key_required) = match name.as_str() {
        "openai" => ("https://api.openai.com/v1", WireStyle::OpenAiChat, true),
        "deepseek" => ("https://api.deepseek.com/v1", WireStyle::OpenAiChat, true),
        "anthropic" => (
            "https://api.anthropic.com",
            WireStyle::AnthropicMessages,
            true,
        ),
        "ollama" => ("http://localhost:11434/v1", WireStyle::OpenAiChat, false),
        _ => ("", WireStyle::OpenAiChat, false),
    };
    let base_url = match env::var(base_url_var(provider)) {
        Ok(v) if !v.trim().is_empty() => v,
        _ if !default_base.is_empty() => default_base.to_owned(),
        _ => {
            return Err(Error::Validation(format!(
                "unknown provider '{provider}': set {} to its OpenAI-compatible endpoint",
                base_url_var(provider)
            )))
        }
    };
    let api_key = env::var(api_key_var(provider)).ok().filter(|k| !k.is_empty());
    if key_required && api_key.is_none() {
        return Err(Error::MissingCredentials {
            provider: provider.to_owned(),
            env_var: api_key_var(provider),
        });
    }
    HttpProviderClient::new(provider, base_url, api_key, style)
}

impl HttpProviderClient {
    pub fn new(
        provider: impl Into<String>,
        base_url: impl Into<String>,
        api_key: Option<String>,
        style: WireStyle,
    ) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(180))
            .build()
            .map_err(|e| Error::Validation(format!("http client: {e}")))?;
        Ok(HttpProviderClient {
            provider: provider.into(),
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            api_key,
            style,
            http,
        })
    }

    fn endpoint(&self) -> String {
        match self.style {
            WireStyle::OpenAiChat => format!("{}/chat/completions", self.base_url),
            WireStyle::AnthropicMessages => format!("{}/v1/messages", self.base_url),
        }
    }

    fn body(&self, prompt: &str, params: &GenerationParams) -> Value {
        let mut body = json!({
            "model": params.model_name,
            "max_tokens": params.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = params.temperature {
            body["temperature"] = json!(t);
        }
        body
    }

    fn parse(&self, value: &Value) -> Option<Generation> {
        match self.style {
            WireStyle::OpenAiChat => {
                let choice = value.get("choices")?.get(0)?;
                let text = choice.get("message")?.get("content")?.as_str()?.to_owned();
                let truncated = choice
                    .get("finish_reason")
                    .and_then(Value::as_str)
                    .map_or(false, |r| r == "length");
                Some(Generation { text, truncated })
            }
            WireStyle::AnthropicMessages => {
                let text = value
                    .get("content")?
                    .get(0)?
                    .get("text")?
                    .as_str()?
                    .to_owned();
                let truncated = value
                    .get("stop_reason")
                    .and_then(Value::as_str)
                    .map_or(false, |r| r == "max_tokens");
                Some(Generation { text, truncated })
            }
        }
    }
}

impl ProviderClient for HttpProviderClient {
    fn generate(
        &self,
        prompt: &str,
        params: &GenerationParams,
    ) -> std::result::Result<Generation, GenerateError> {
        let mut request = self
            .http
            .post(self.endpoint())
            .json(&self.body(prompt, params));
        match self.style {
            WireStyle::OpenAiChat => {
                if let Some(key) = &self.api_key {
                    request = request.bearer_auth(key);
                }
            }
            WireStyle::AnthropicMessages => {
                if let Some(key) = &self.api_key {
                    request = request.header("x-api-key", key);
                }
                request = request.header("anthropic-version", "2023-06-01");
            }
        }
        // Transport failures (connect, timeout, reset) are worth retrying.
        let response = request.send().map_err(|e| {
            GenerateError::Retryable(format!("{} transport: {e}", self.provider))
        })?;
        let status = response.status();
        let body_text = response.text().unwrap_or_default();
        if !status.is_success() {
            let snippet: String = body_text.chars().take(200).collect();
            let message = format!("{} returned {status}: {snippet}", self.provider);
            return if status.as_u16() == 429
                || status.as_u16() == 408
                || status.is_server_error()
            {
                Err(GenerateError::Retryable(message))
            } else {
                Err(GenerateError::Fatal(message))
            };
        }
        let value: Value = serde_json::from_str(&body_text).map_err(|e| {
            GenerateError::Fatal(format!("{} sent unparseable JSON: {e}", self.provider))
        })?;
        self.parse(&value).ok_or_else(|| {
            GenerateError::Fatal(format!(
                "{} response missing expected fields",
                self.provider
            ))
        })
    }
}

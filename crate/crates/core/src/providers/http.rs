//! Clients for the common chat-completions / embeddings HTTP wire shape.
//!
//! Chat: `POST {model, messages: [{role: "user", content}]}`, answer read
//! from `choices[0].message.content`. Embeddings: `POST {model, input}`,
//! vector read from `data[0].embedding`. The endpoint is the full URL.
//!
//! Credentials are never held in memory between requests: the config names
//! an environment variable, checked at construction and read per request.

use std::{env, thread, time::Duration};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    ChatProvider, EmbedProvider, EmbeddingVector, ProviderError, DEFAULT_CONCURRENCY,
};

fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}
fn default_temperature() -> Option<f64> {
    Some(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpChatConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub credentials_ref: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Sent as `temperature` when set.
    #[serde(default = "default_temperature")]
    pub temperature: Option<f64>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// First retry delay; doubles on each further retry, no jitter.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpEmbedConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub credentials_ref: Option<String>,
    pub dimension: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

struct Transport {
    agent: ureq::Agent,
    endpoint: String,
    credentials_ref: Option<String>,
    max_retries: u32,
    backoff_base: Duration,
}

enum Failure {
    Retryable(ProviderError),
    Fatal(ProviderError),
}

impl Transport {
    fn new(
        endpoint: &str,
        credentials_ref: &Option<String>,
        timeout_secs: f64,
        max_retries: u32,
        backoff_base_ms: u64,
    ) -> Result<Self, ProviderError> {
        if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
            return Err(ProviderError::Config(format!(
                "endpoint {endpoint:?} is not an http(s) URL"
            )));
        }
        if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
            return Err(ProviderError::Config(format!(
                "timeout {timeout_secs} must be positive"
            )));
        }
        if let Some(var) = credentials_ref {
            if env::var_os(var).is_none() {
                return Err(ProviderError::MissingCredential(var.clone()));
            }
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Transport {
            agent,
            endpoint: endpoint.to_owned(),
            credentials_ref: credentials_ref.clone(),
            max_retries,
            backoff_base: Duration::from_millis(backoff_base_ms),
        })
    }

    fn attempt(&self, body: &serde_json::Value, attempts: u32) -> Result<String, Failure> {
        let mut request = self.agent.post(&self.endpoint);
        if let Some(var) = &self.credentials_ref {
            let key = env::var(var)
                .map_err(|_| Failure::Fatal(ProviderError::MissingCredential(var.clone())))?;
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| {
            Failure::Retryable(ProviderError::Transport {
                attempts,
                message: e.to_string(),
            })
        })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| {
            Failure::Retryable(ProviderError::Transport {
                attempts,
                message: e.to_string(),
            })
        })?;
        if !(200..300).contains(&status) {
            let err = ProviderError::Status {
                status,
                attempts,
                body: text,
            };
            return Err(if status == 429 || status >= 500 {
                Failure::Retryable(err)
            } else {
                Failure::Fatal(err)
            });
        }
        Ok(text)
    }

    /// POSTs `body` and hands the response text to `parse`. Transport errors,
    /// 429/5xx and unparseable payloads are retried up to `max_retries` times.
    fn post<T>(
        &self,
        body: serde_json::Value,
        parse: impl Fn(&str, u32) -> Result<T, Failure>,
    ) -> Result<T, ProviderError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = self.attempt(&body, attempts).and_then(|t| parse(&t, attempts));
            match outcome {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e)) => {
                    if attempts > self.max_retries {
                        return Err(e);
                    }
                    let delay = self.backoff_base * 2u32.saturating_pow(attempts - 1);
                    log::warn!("{e}; retrying in {delay:?}");
                    thread::sleep(delay);
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

fn malformed(attempts: u32, message: impl Into<String>) -> Failure {
    Failure::Retryable(ProviderError::Malformed {
        attempts,
        message: message.into(),
    })
}

pub struct HttpChatProvider {
    config: HttpChatConfig,
    transport: Transport,
}

impl HttpChatProvider {
    pub fn new(config: HttpChatConfig) -> Result<Self, ProviderError> {
        if config.concurrency == 0 {
            return Err(ProviderError::Config("chat concurrency must be at least 1".into()));
        }
        let transport = Transport::new(
            &config.endpoint,
            &config.credentials_ref,
            config.timeout_secs,
            config.max_retries,
            config.backoff_base_ms,
        )?;
        Ok(HttpChatProvider { config, transport })
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = json!(t);
        }
        self.transport.post(body, |text, attempts| {
            let parsed: ChatResponse =
                serde_json::from_str(text).map_err(|e| malformed(attempts, e.to_string()))?;
            parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| malformed(attempts, "no choices[0].message.content"))
        })
    }

    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn concurrency(&self) -> usize {
        self.config.concurrency
    }
}

pub struct HttpEmbedProvider {
    config: HttpEmbedConfig,
    transport: Transport,
}

impl HttpEmbedProvider {
    pub fn new(config: HttpEmbedConfig) -> Result<Self, ProviderError> {
        if config.dimension == 0 {
            return Err(ProviderError::Config("embedding dimension must be positive".into()));
        }
        if config.concurrency == 0 {
            return Err(ProviderError::Config("embed concurrency must be at least 1".into()));
        }
        let transport = Transport::new(
            &config.endpoint,
            &config.credentials_ref,
            config.timeout_secs,
            config.max_retries,
            config.backoff_base_ms,
        )?;
        Ok(HttpEmbedProvider { config, transport })
    }
}

impl EmbedProvider for HttpEmbedProvider {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let body = json!({"model": self.config.model, "input": text});
        let expected = self.config.dimension;
        self.transport.post(body, |payload, attempts| {
            let parsed: EmbedResponse =
                serde_json::from_str(payload).map_err(|e| malformed(attempts, e.to_string()))?;
            let values = parsed
                .data
                .into_iter()
                .next()
                .ok_or_else(|| malformed(attempts, "no data[0].embedding"))?
                .embedding;
            if values.len() != expected {
                return Err(Failure::Fatal(ProviderError::DimensionMismatch {
                    expected,
                    got: values.len(),
                }));
            }
            EmbeddingVector::new(values).map_err(Failure::Fatal)
        })
    }

    fn model_name(&self) -> &str {
        &self.config.model
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn concurrency(&self) -> usize {
        self.config.concurrency
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chat_config(endpoint: &str) -> HttpChatConfig {
        HttpChatConfig {
            endpoint: endpoint.into(),
            model: "m".into(),
            credentials_ref: None,
            timeout_secs: 1.0,
            max_retries: 0,
            temperature: None,
            concurrency: 1,
            backoff_base_ms: 1,
        }
    }

    #[test]
    fn missing_credential_fails_at_construction() {
        let mut config = chat_config("http://127.0.0.1:9/v1/chat/completions");
        config.credentials_ref = Some("REQRAG_TEST_SURELY_UNSET_VAR".into());
        assert!(matches!(
            HttpChatProvider::new(config),
            Err(ProviderError::MissingCredential(v)) if v == "REQRAG_TEST_SURELY_UNSET_VAR"
        ));
    }

    #[test]
    fn non_http_endpoint_is_rejected() {
        assert!(matches!(
            HttpChatProvider::new(chat_config("ftp://host/x")),
            Err(ProviderError::Config(_))
        ));
    }

    #[test]
    fn config_defaults() {
        let c: HttpChatConfig =
            toml::from_str("endpoint = \"http://x\"\nmodel = \"o1\"\n").unwrap();
        assert_eq!(c.max_retries, 3);
        assert_eq!(c.backoff_base_ms, 500);
        assert_eq!(c.concurrency, 4);
        assert_eq!(c.temperature, Some(0.0));
    }
}

//! Chat-completion and text-embedding backends.
//!
//! Stages never call a provider's trait methods directly; they go through
//! [`chat_complete`] and [`embed_text`], which enforce the input and output
//! contracts (non-empty prompts, non-empty completions, fixed dimension,
//! finite entries) for every backend alike.

mod http;
mod offline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpChatConfig, HttpChatProvider, HttpEmbedConfig, HttpEmbedProvider};
pub use offline::{offline_embed, MockChat, OfflineEmbedder, MIN_OFFLINE_DIMENSION};

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("text to embed is empty")]
    EmptyText,
    #[error("provider returned an empty completion")]
    EmptyCompletion,
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider answered HTTP {status} after {attempts} attempt(s): {body}")]
    Status {
        status: u16,
        attempts: u32,
        body: String,
    },
    #[error("malformed provider payload after {attempts} attempt(s): {message}")]
    Malformed { attempts: u32, message: String },
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("embedding dimension {0} is below the minimum of {MIN_OFFLINE_DIMENSION}")]
    InvalidDimension(usize),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("provider misconfigured: {0}")]
    Config(String),
}

/// Fixed-length vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ProviderError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProviderError::NonFinite(i));
        }
        if values.is_empty() {
            return Err(ProviderError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        Ok(EmbeddingVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, ProviderError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError>;

    fn model_name(&self) -> &str;

    /// Maximum number of requests callers may have in flight at once.
    fn concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

pub trait EmbedProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError>;

    fn model_name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn concurrency(&self) -> usize {
        DEFAULT_CONCURRENCY
    }
}

pub fn chat_complete(provider: &dyn ChatProvider, prompt: &str) -> Result<String, ProviderError> {
    if prompt.is_empty() {
        return Err(ProviderError::EmptyPrompt);
    }
    let completion = provider.complete(prompt)?;
    if completion.trim().is_empty() {
        return Err(ProviderError::EmptyCompletion);
    }
    Ok(completion)
}

pub fn embed_text(provider: &dyn EmbedProvider, text: &str) -> Result<EmbeddingVector, ProviderError> {
    if text.trim().is_empty() {
        return Err(ProviderError::EmptyText);
    }
    let vector = provider.embed(text)?;
    if vector.dimension() != provider.dimension() {
        return Err(ProviderError::DimensionMismatch {
            expected: provider.dimension(),
            got: vector.dimension(),
        });
    }
    Ok(vector)
}

//! Deterministic, networkless providers.

use std::sync::atomic::{AtomicUsize, Ordering};

use super::{ChatProvider, EmbedProvider, EmbeddingVector, ProviderError};
use crate::digest;

pub const MIN_OFFLINE_DIMENSION: usize = 16;

/// Hashed character-trigram embedding.
///
/// The text is lowercased and split into Unicode scalar values. Every window
/// of three consecutive characters is UTF-8 encoded, hashed with 64-bit
/// FNV-1a and counted into bucket `hash % dimension`. Texts shorter than
/// three characters are right-padded with spaces to a single trigram. The
/// count vector is then L2-normalized. Only integer arithmetic happens
/// before the final normalization, so results are bit-identical everywhere.
pub fn offline_embed(text: &str, dimension: usize) -> Result<EmbeddingVector, ProviderError> {
    if text.is_empty() {
        return Err(ProviderError::EmptyText);
    }
    if dimension < MIN_OFFLINE_DIMENSION {
        return Err(ProviderError::InvalidDimension(dimension));
    }
    let mut chars: Vec<char> = text.to_lowercase().chars().collect();
    while chars.len() < 3 {
        chars.push(' ');
    }
    let mut counts = vec![0u64; dimension];
    let mut buf = [0u8; 12];
    for window in chars.windows(3) {
        let mut len = 0;
        for c in window {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let bucket = (digest::fnv1a64(&buf[..len]) % dimension as u64) as usize;
        counts[bucket] += 1;
    }
    let norm = counts
        .iter()
        .map(|&c| (c as f64) * (c as f64))
        .sum::<f64>()
        .sqrt();
    EmbeddingVector::new(counts.into_iter().map(|c| c as f64 / norm).collect())
}

#[derive(Debug, Clone)]
pub struct OfflineEmbedder {
    dimension: usize,
    model_name: String,
}

impl OfflineEmbedder {
    pub fn new(dimension: usize) -> Result<Self, ProviderError> {
        if dimension < MIN_OFFLINE_DIMENSION {
            return Err(ProviderError::InvalidDimension(dimension));
        }
        Ok(OfflineEmbedder {
            dimension,
            model_name: "offline-trigram-fnv1a".to_owned(),
        })
    }
}

impl EmbedProvider for OfflineEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        offline_embed(text, self.dimension)
    }

    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

enum Reply {
    Canned(String),
    Script(Vec<String>),
    Digest,
}

/// In-process chat stand-in. Counts calls so tests can assert on them.
pub struct MockChat {
    reply: Reply,
    calls: AtomicUsize,
}

impl MockChat {
    /// Always answers `reply`.
    pub fn canned(reply: impl Into<String>) -> Self {
        Self::with(Reply::Canned(reply.into()))
    }

    /// Answers the i-th call with `replies[i]`, repeating the last one.
    pub fn scripted<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        assert!(!replies.is_empty(), "scripted mock needs at least one reply");
        Self::with(Reply::Script(replies))
    }

    /// Answers with a short deterministic note derived from the prompt hash.
    /// Used by `--offline` runs, where no model is available.
    pub fn digest() -> Self {
        Self::with(Reply::Digest)
    }

    fn with(reply: Reply) -> Self {
        MockChat {
            reply,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for MockChat {
    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(match &self.reply {
            Reply::Canned(r) => r.clone(),
            Reply::Script(rs) => rs[call.min(rs.len() - 1)].clone(),
            Reply::Digest => format!(
                "Offline draft: no language model was called.\n\
                 Prompt sha256: {}\nPrompt length: {} characters.\n",
                digest::sha256_hex(prompt.as_bytes()),
                prompt.chars().count()
            ),
        })
    }

    fn model_name(&self) -> &str {
        "mock-chat"
    }
}

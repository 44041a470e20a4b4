//! Paragraph reconstruction and chunking.
//!
//! Extracted text arrives hard-wrapped. [`reconstruct_paragraphs`] merges
//! wrapped lines so that the only paragraph boundaries left are blank lines;
//! [`chunk_document`] then emits one [`DocumentChunk`] per paragraph, folding
//! fragments shorter than the minimum length into a neighbour.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{digest, providers::ChatProvider, providers::ProviderError};

pub const DEFAULT_MIN_CHUNK_CHARS: usize = 20;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("document text is empty")]
    EmptyText,
    #[error("llm-assisted reconstruction requires a chat provider")]
    MissingChatProvider,
    #[error("llm-assisted reconstruction failed: {0}")]
    Provider(#[source] ProviderError),
    #[error("document {doc_id:?} yields no chunk of at least {min_chars} characters")]
    NoChunks { doc_id: String, min_chars: usize },
    #[error("invalid document id {0:?}")]
    InvalidDocId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Mission,
    Domain,
}

impl std::fmt::Display for DocKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DocKind::Mission => "mission",
            DocKind::Domain => "domain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceDocument {
    pub doc_id: String,
    pub kind: DocKind,
    pub text: String,
    pub origin: String,
}

impl SourceDocument {
    pub fn new(
        doc_id: impl Into<String>,
        kind: DocKind,
        text: impl Into<String>,
        origin: impl Into<String>,
    ) -> Result<Self, IngestError> {
        let doc_id = doc_id.into();
        let text = text.into();
        if doc_id.trim().is_empty() {
            return Err(IngestError::InvalidDocId(doc_id));
        }
        if text.trim().is_empty() {
            return Err(IngestError::EmptyText);
        }
        Ok(SourceDocument {
            doc_id,
            kind,
            text,
            origin: origin.into(),
        })
    }
}

/// One paragraph of a document. `span` is a half-open range of character
/// (not byte) offsets into the reconstructed document text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub ordinal: usize,
    pub text: String,
    pub span: (usize, usize),
}

impl DocumentChunk {
    pub fn new(doc_id: &str, ordinal: usize, text: String, span: (usize, usize)) -> Self {
        DocumentChunk {
            chunk_id: digest::chunk_id(doc_id, ordinal, &text),
            doc_id: doc_id.to_owned(),
            ordinal,
            text,
            span,
        }
    }

    /// First eight hex digits of the chunk id, used as an in-prompt citation.
    pub fn short_id(&self) -> &str {
        &self.chunk_id[..self.chunk_id.len().min(8)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructMode {
    #[default]
    Heuristic,
    LlmAssisted,
}

const RECONSTRUCT_INSTRUCTION: &str = "The text below was extracted from a PDF document. \
Line breaks were inserted at arbitrary positions and paragraphs may be split. \
Reconstruct the original paragraphs: join lines that belong to the same paragraph, \
separate paragraphs with exactly one blank line, and do not add, remove, reword or \
summarise any content. Reply with the reconstructed text only.\n\n";

pub fn reconstruct_paragraphs(
    raw_text: &str,
    mode: ReconstructMode,
    chat: Option<&dyn ChatProvider>,
) -> Result<String, IngestError> {
    if raw_text.trim().is_empty() {
        return Err(IngestError::EmptyText);
    }
    match mode {
        ReconstructMode::Heuristic => Ok(reconstruct_heuristic(raw_text)),
        ReconstructMode::LlmAssisted => {
            let chat = chat.ok_or(IngestError::MissingChatProvider)?;
            let prompt = format!("{RECONSTRUCT_INSTRUCTION}{raw_text}");
            chat.complete(&prompt).map_err(IngestError::Provider)
        }
    }
}

fn ends_sentence(line: &str) -> bool {
    line.ends_with(['.', '!', '?', ':', ';'])
}

fn starts_continuation(line: &str) -> bool {
    line.chars()
        .next()
        .is_some_and(|c| c.is_lowercase() || c.is_ascii_digit())
}

/// A line break inside a block survives only when the line closes a
/// sentence and the next line does not look like a continuation. Every other
/// break becomes a space. Blank-line runs collapse to one blank line.
fn reconstruct_heuristic(raw_text: &str) -> String {
    let normalized = raw_text.replace("\r\n", "\n").replace('\r', "\n");
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut prev_line: Option<&str> = None;

    for line in normalized.lines().map(str::trim) {
        if line.is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
            prev_line = None;
            continue;
        }
        if let Some(prev) = prev_line {
            if ends_sentence(prev) && !starts_continuation(line) {
                current.push('\n');
            } else {
                current.push(' ');
            }
        }
        current.push_str(line);
        prev_line = Some(line);
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }
    paragraphs.join("\n\n")
}

struct Paragraph {
    text: String,
    start: usize,
    end: usize,
}

/// Non-blank line runs with char-offset spans of their trimmed extent.
fn paragraphs(text: &str) -> Vec<Paragraph> {
    let mut out = Vec::new();
    let mut chars_before = 0usize;
    let mut open: Option<(usize, usize)> = None; // (byte start, char start)
    let mut last_end: (usize, usize) = (0, 0); // (byte end, char end)
    let mut byte_pos = 0usize;

    let mut close = |open: &mut Option<(usize, usize)>, last_end: (usize, usize)| {
        if let Some((bs, cs)) = open.take() {
            out.push(Paragraph {
                text: text[bs..last_end.0].to_owned(),
                start: cs,
                end: last_end.1,
            });
        }
    };

    for raw_line in text.split_inclusive('\n') {
        let content = raw_line.trim_end_matches(['\n', '\r']);
        let trimmed = content.trim();
        if trimmed.is_empty() {
            close(&mut open, last_end);
        } else {
            let lead = content.len() - content.trim_start().len();
            let lead_chars = content[..lead].chars().count();
            if open.is_none() {
                open = Some((byte_pos + lead, chars_before + lead_chars));
            }
            let trimmed_chars = trimmed.chars().count();
            last_end = (
                byte_pos + lead + trimmed.len(),
                chars_before + lead_chars + trimmed_chars,
            );
        }
        byte_pos += raw_line.len();
        chars_before += raw_line.chars().count();
    }
    close(&mut open, last_end);
    out
}

/// Splits a reconstructed document into paragraph chunks.
///
/// A paragraph shorter than `min_chars` characters is prefixed onto the next
/// one with a single `\n`; a short trailing paragraph is appended to the
/// previous chunk instead.
pub fn chunk_document(
    doc: &SourceDocument,
    min_chars: usize,
) -> Result<Vec<DocumentChunk>, IngestError> {
    let mut merged: Vec<Paragraph> = Vec::new();
    let mut pending: Option<Paragraph> = None;

    for para in paragraphs(&doc.text) {
        let para = match pending.take() {
            Some(p) => Paragraph {
                text: format!("{}\n{}", p.text, para.text),
                start: p.start,
                end: para.end,
            },
            None => para,
        };
        if para.text.chars().count() < min_chars {
            pending = Some(para);
        } else {
            merged.push(para);
        }
    }
    if let Some(p) = pending {
        match merged.last_mut() {
            Some(last) => {
                last.text.push('\n');
                last.text.push_str(&p.text);
                last.end = p.end;
            }
            None => {
                return Err(IngestError::NoChunks {
                    doc_id: doc.doc_id.clone(),
                    min_chars,
                })
            }
        }
    }

    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(ordinal, p)| DocumentChunk::new(&doc.doc_id, ordinal, p.text, (p.start, p.end)))
        .collect())
}

/// File-stem-derived document id restricted to `[A-Za-z0-9._-]`.
pub fn doc_id_from_path(path: &Path) -> Result<String, IngestError> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let id: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if id.is_empty() || id.chars().all(|c| c == '_' || c == '.') {
        return Err(IngestError::InvalidDocId(stem));
    }
    Ok(id)
}

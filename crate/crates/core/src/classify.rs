//! In-context classification of mission chunks and neural-label aggregation.
//!
//! Each chunk is scored against every category independently, assigned to
//! its highest-scoring category, and the assignment counts form the mission
//! document's neural label.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{
    ingest::DocumentChunk,
    lexical,
    par::bounded_map,
    providers::{chat_complete, ChatProvider, ProviderError},
    taxonomy::Taxonomy,
};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("chunk {chunk_id}: classification reply unparseable after retry: {raw:?}")]
    Unparseable { chunk_id: String, raw: String },
    #[error("chunk {chunk_id}: {source}")]
    Provider {
        chunk_id: String,
        #[source]
        source: ProviderError,
    },
    #[error("cannot build a neural label from zero chunks")]
    NoAssignments,
    #[error("assignment for chunk {chunk_id} has category {category_id}, but K = {k}")]
    CategoryOutOfRange {
        chunk_id: String,
        category_id: usize,
        k: usize,
    },
    #[error("score vector for chunk {chunk_id} has length {got}, expected {expected}")]
    WrongLength {
        chunk_id: String,
        expected: usize,
        got: usize,
    },
    #[error("score vector for chunk {0} contains a non-finite value")]
    NonFinite(String),
    #[error("invalid {variant:?} label: {reason}")]
    InvalidLabel {
        variant: LabelVariant,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub chunk_id: String,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(chunk_id: impl Into<String>, scores: Vec<f64>) -> Result<Self, ClassifyError> {
        let chunk_id = chunk_id.into();
        if scores.is_empty() {
            return Err(ClassifyError::WrongLength {
                chunk_id,
                expected: 1,
                got: 0,
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(ClassifyError::NonFinite(chunk_id));
        }
        Ok(ScoreVector { chunk_id, scores })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkAssignment {
    pub chunk_id: String,
    pub category_id: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelVariant {
    /// Integer assignment counts per category.
    Counts,
    /// Sums of per-chunk normalized score vectors.
    Soft,
    /// Embedding dot products; entries may be negative.
    Similarities,
}

/// K-dimensional category distribution of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralLabel {
    pub subject_id: String,
    pub variant: LabelVariant,
    pub values: Vec<f64>,
}

impl NeuralLabel {
    pub fn new(
        subject_id: impl Into<String>,
        variant: LabelVariant,
        values: Vec<f64>,
    ) -> Result<Self, ClassifyError> {
        let invalid = |reason: &str| ClassifyError::InvalidLabel {
            variant,
            reason: reason.to_owned(),
        };
        if values.is_empty() {
            return Err(invalid("label has no entries"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite entry"));
        }
        match variant {
            LabelVariant::Counts if values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) => {
                return Err(invalid("counts must be non-negative integers"))
            }
            LabelVariant::Soft if values.iter().any(|v| *v < 0.0) => {
                return Err(invalid("soft label entries must be non-negative"))
            }
            _ => {}
        }
        Ok(NeuralLabel {
            subject_id: subject_id.into(),
            variant,
            values,
        })
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// How chunk-category correlations are obtained.
#[derive(Clone, Copy)]
pub enum Scorer<'a> {
    /// One classification prompt per chunk.
    Llm(&'a dyn ChatProvider),
    /// Fraction of a category description's words present in the chunk.
    Lexical,
}

pub fn classification_prompt(chunk_text: &str, taxonomy: &Taxonomy) -> String {
    let mut prompt = String::from(
        "You are classifying a passage from a space mission document against a fixed set \
         of application categories. For every category, rate from 0 to 1 how strongly the \
         passage relates to it.\n\nCategories:\n",
    );
    for c in taxonomy.categories() {
        prompt.push_str(&format!("{}. {}: {}\n", c.id, c.name, c.description));
    }
    prompt.push_str("\nPassage:\n");
    prompt.push_str(chunk_text);
    prompt.push_str(&format!(
        "\n\nReply with exactly {} comma-separated numbers in [0,1], one per category in \
         the order listed, and nothing else.",
        taxonomy.len()
    ));
    prompt
}

fn parse_line(line: &str, k: usize) -> Option<Vec<f64>> {
    let body = line
        .trim()
        .trim_start_matches(['[', '('])
        .trim_end_matches([']', ')', '.']);
    let scores: Vec<f64> = body
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect::<Option<_>>()?;
    let in_range = scores
        .iter()
        .all(|s| s.is_finite() && (0.0..=1.0).contains(s));
    (scores.len() == k && in_range).then_some(scores)
}

/// Parses a `K`-number reply. Accepts the whole reply or, failing that, its
/// last non-empty line (models sometimes preface the numbers).
pub fn parse_scores(reply: &str, k: usize) -> Option<Vec<f64>> {
    parse_line(reply, k).or_else(|| {
        reply
            .lines()
            .rev()
            .find(|l| !l.trim().is_empty())
            .and_then(|l| parse_line(l, k))
    })
}

fn lexical_scores(chunk_text: &str, category_words: &[HashSet<String>]) -> Vec<f64> {
    category_words
        .iter()
        .map(|words| lexical::overlap_score(chunk_text, words))
        .collect()
}

pub fn score_chunk(
    chunk: &DocumentChunk,
    taxonomy: &Taxonomy,
    scorer: Scorer<'_>,
) -> Result<ScoreVector, ClassifyError> {
    match scorer {
        Scorer::Lexical => {
            let words: Vec<_> = taxonomy
                .categories()
                .iter()
                .map(|c| lexical::word_set(&c.description))
                .collect();
            ScoreVector::new(&chunk.chunk_id, lexical_scores(&chunk.text, &words))
        }
        Scorer::Llm(chat) => {
            let prompt = classification_prompt(&chunk.text, taxonomy);
            let mut raw = String::new();
            for attempt in 0..2 {
                raw = chat_complete(chat, &prompt).map_err(|source| ClassifyError::Provider {
                    chunk_id: chunk.chunk_id.clone(),
                    source,
                })?;
                if let Some(scores) = parse_scores(&raw, taxonomy.len()) {
                    return ScoreVector::new(&chunk.chunk_id, scores);
                }
                if attempt == 0 {
                    log::warn!("chunk {}: unparseable classification reply, retrying", chunk.chunk_id);
                }
            }
            Err(ClassifyError::Unparseable {
                chunk_id: chunk.chunk_id.clone(),
                raw,
            })
        }
    }
}

/// Scores every chunk, at most `concurrency` at a time for the LLM scorer.
/// Output order follows `chunks`.
pub fn score_chunks(
    chunks: &[DocumentChunk],
    taxonomy: &Taxonomy,
    scorer: Scorer<'_>,
) -> Result<Vec<ScoreVector>, ClassifyError> {
    match scorer {
        Scorer::Lexical => {
            let words: Vec<_> = taxonomy
                .categories()
                .iter()
                .map(|c| lexical::word_set(&c.description))
                .collect();
            chunks
                .iter()
                .map(|c| ScoreVector::new(&c.chunk_id, lexical_scores(&c.text, &words)))
                .collect()
        }
        Scorer::Llm(chat) => bounded_map(chunks, chat.concurrency(), |c| {
            score_chunk(c, taxonomy, scorer)
        }),
    }
}

/// Argmax with ties going to the lowest category id.
pub fn assign_category(scores: &ScoreVector) -> ChunkAssignment {
    let (category_id, score) = scores
        .scores
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, s)| {
            if s > best.1 {
                (i, s)
            } else {
                best
            }
        });
    ChunkAssignment {
        chunk_id: scores.chunk_id.clone(),
        category_id,
        score,
    }
}

/// Counts assignments per category into a `Counts` label of length `k`.
pub fn aggregate_neural_label(
    assignments: &[ChunkAssignment],
    k: usize,
    doc_id: &str,
) -> Result<NeuralLabel, ClassifyError> {
    if assignments.is_empty() {
        return Err(ClassifyError::NoAssignments);
    }
    let mut counts = vec![0u64; k];
    for a in assignments {
        let slot = counts
            .get_mut(a.category_id)
            .ok_or_else(|| ClassifyError::CategoryOutOfRange {
                chunk_id: a.chunk_id.clone(),
                category_id: a.category_id,
                k,
            })?;
        *slot += 1;
    }
    NeuralLabel::new(
        doc_id,
        LabelVariant::Counts,
        counts.into_iter().map(|c| c as f64).collect(),
    )
}

/// Sums score vectors after clamping negatives to zero and scaling each to
/// unit L1 mass. An all-zero vector contributes `1/k` to every category, so
/// the label still sums to the chunk count.
pub fn aggregate_soft_label(
    scores: &[ScoreVector],
    k: usize,
    doc_id: &str,
) -> Result<NeuralLabel, ClassifyError> {
    if scores.is_empty() {
        return Err(ClassifyError::NoAssignments);
    }
    let mut totals = vec![0.0f64; k];
    for s in scores {
        if s.scores.len() != k {
            return Err(ClassifyError::WrongLength {
                chunk_id: s.chunk_id.clone(),
                expected: k,
                got: s.scores.len(),
            });
        }
        let mass: f64 = s.scores.iter().map(|v| v.max(0.0)).sum();
        for (t, v) in totals.iter_mut().zip(&s.scores) {
            *t += if mass > 0.0 {
                v.max(0.0) / mass
            } else {
                1.0 / k as f64
            };
        }
    }
    NeuralLabel::new(doc_id, LabelVariant::Soft, totals)
}

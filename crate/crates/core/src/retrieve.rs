//! Scenario-extended query retrieval over the requirements corpus.
//!
//! Mission and standards chunks are ranked separately, each against its own
//! budget. Scores from the two partitions are not comparable.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{
    digest,
    ingest::DocumentChunk,
    lexical,
    providers::{EmbedProvider, EmbeddingVector, ProviderError},
    select::{cosine_similarity, RequirementsCorpus},
    store::EmbeddingCache,
    taxonomy::Category,
};

pub const DEFAULT_K_MISSION: usize = 10;
pub const DEFAULT_K_DOMAIN: usize = 20;

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("requirements corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtendedQuery {
    pub raw_query: String,
    pub category_id: usize,
    pub rendered: String,
}

/// `query`, a blank line, then `Scenario — <name>: <description>`.
pub fn extend_query(query: &str, category: &Category) -> Result<ExtendedQuery, RetrieveError> {
    if query.trim().is_empty() {
        return Err(RetrieveError::EmptyQuery);
    }
    Ok(ExtendedQuery {
        raw_query: query.to_owned(),
        category_id: category.id,
        rendered: format!(
            "{query}\n\nScenario — {}: {}",
            category.name, category.description
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mission,
    Domain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub chunk: DocumentChunk,
    pub score: f64,
    pub source: Source,
    /// 1-based within `source`.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalBudget {
    pub k_mission: usize,
    pub k_domain: usize,
}

impl Default for RetrievalBudget {
    fn default() -> Self {
        RetrievalBudget {
            k_mission: DEFAULT_K_MISSION,
            k_domain: DEFAULT_K_DOMAIN,
        }
    }
}

#[derive(Clone, Copy)]
pub enum RetrievalScorer<'a> {
    /// Cosine between embeddings of the extended query and each chunk.
    Dense(&'a dyn EmbedProvider),
    /// Fraction of the extended query's words found in the chunk.
    Lexical,
}

fn rank(
    chunks: &[DocumentChunk],
    scores: Vec<f64>,
    k: usize,
    source: Source,
) -> Vec<RetrievedChunk> {
    let mut scored: Vec<(f64, &DocumentChunk)> = scores.into_iter().zip(chunks).collect();
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.chunk_id.cmp(&b.1.chunk_id))
    });
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (score, chunk))| RetrievedChunk {
            chunk: chunk.clone(),
            score,
            source,
            rank: i + 1,
        })
        .collect()
}

fn dense_scores(
    query: &EmbeddingVector,
    chunks: &[DocumentChunk],
    embedder: &dyn EmbedProvider,
    cache: &mut EmbeddingCache,
) -> Result<Vec<f64>, ProviderError> {
    let items: Vec<(String, &str)> = chunks
        .iter()
        .map(|c| (c.chunk_id.clone(), c.text.as_str()))
        .collect();
    let vectors = cache.embed_all(embedder, &items)?;
    // A zero-norm embedding has no direction; it scores 0.
    Ok(vectors
        .iter()
        .map(|v| cosine_similarity(query.values(), v.values()).unwrap_or(0.0))
        .collect())
}

/// Top `k_mission` mission chunks followed by top `k_domain` standards
/// chunks, each partition ranked by score descending then chunk id.
pub fn retrieve_chunks(
    query: &ExtendedQuery,
    corpus: &RequirementsCorpus,
    scorer: RetrievalScorer<'_>,
    cache: &mut EmbeddingCache,
    budget: RetrievalBudget,
) -> Result<Vec<RetrievedChunk>, RetrieveError> {
    if corpus.is_empty() {
        return Err(RetrieveError::EmptyCorpus);
    }
    let (mission_scores, domain_scores) = match scorer {
        RetrievalScorer::Lexical => {
            let words = lexical::word_set(&query.rendered);
            let score = |cs: &[DocumentChunk]| -> Vec<f64> {
                cs.iter().map(|c| lexical::overlap_score(&c.text, &words)).collect()
            };
            (score(&corpus.mission_chunks), score(&corpus.domain_chunks))
        }
        RetrievalScorer::Dense(embedder) => {
            let key = format!("query:{}", digest::sha256_hex(query.rendered.as_bytes()));
            let q = cache
                .embed_all(embedder, &[(key, query.rendered.as_str())])?
                .remove(0);
            (
                dense_scores(&q, &corpus.mission_chunks, embedder, cache)?,
                dense_scores(&q, &corpus.domain_chunks, embedder, cache)?,
            )
        }
    };
    let mut out = rank(&corpus.mission_chunks, mission_scores, budget.k_mission, Source::Mission);
    out.extend(rank(&corpus.domain_chunks, domain_scores, budget.k_domain, Source::Domain));
    Ok(out)
}

/// Row of the retrieval report written for analyst review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReportEntry {
    pub rank: usize,
    pub score: f64,
    pub source: Source,
    pub chunk_id: String,
    pub doc_id: String,
    pub preview: String,
}

impl From<&RetrievedChunk> for RetrievalReportEntry {
    fn from(r: &RetrievedChunk) -> Self {
        RetrievalReportEntry {
            rank: r.rank,
            score: r.score,
            source: r.source,
            chunk_id: r.chunk.chunk_id.clone(),
            doc_id: r.chunk.doc_id.clone(),
            preview: r.chunk.text.chars().take(80).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{
        providers::OfflineEmbedder,
        select::SelectionResult,
        taxonomy::default_taxonomy,
    };

    fn chunks(doc: &str, texts: &[&str]) -> Vec<DocumentChunk> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| DocumentChunk::new(doc, i, t.to_string(), (0, t.len())))
            .collect()
    }

    fn corpus(mission: Vec<DocumentChunk>, domain: Vec<DocumentChunk>) -> RequirementsCorpus {
        RequirementsCorpus {
            mission_chunks: mission,
            domain_chunks: domain,
            selection: SelectionResult {
                ranked: vec![],
                threshold: 0.0,
                top_k: None,
                selected_ids: vec!["std".into()],
            },
        }
    }

    const PAYLOAD_QUERY: &str = "Payload Design Constraints: Outline requirements related to \
        materials, contamination, vibration, shock, and natural frequency";

    #[test]
    fn extended_query_contains_both_texts() {
        let t = default_taxonomy();
        let payload = t.find("Payload").unwrap();
        let q = extend_query(PAYLOAD_QUERY, payload).unwrap();
        assert!(q.rendered.contains(PAYLOAD_QUERY));
        assert!(q.rendered.contains(&payload.description));
        assert!(q.rendered.contains("Scenario — Payload: "));
        assert_eq!(q, extend_query(PAYLOAD_QUERY, payload).unwrap());
        assert!(matches!(extend_query("  ", payload), Err(RetrieveError::EmptyQuery)));
    }

    #[test]
    fn verbatim_chunk_ranks_first() {
        let t = default_taxonomy();
        let q = extend_query("vibration limits", t.get(0).unwrap()).unwrap();
        let mut mission = chunks("m", &["Unrelated thermal text here.", "Another unrelated paragraph."]);
        mission.push(DocumentChunk::new("m", 2, q.rendered.clone(), (0, 1)));
        let c = corpus(mission, chunks("std", &["Standards text about testing."]));
        let e = OfflineEmbedder::new(256).unwrap();
        let hits = retrieve_chunks(&q, &c, RetrievalScorer::Dense(&e), &mut EmbeddingCache::in_memory(), RetrievalBudget::default()).unwrap();
        assert_eq!(hits[0].chunk.ordinal, 2);
        assert_eq!(hits[0].rank, 1);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_partitions_return_everything() {
        let t = default_taxonomy();
        let q = extend_query("shock", t.get(0).unwrap()).unwrap();
        let c = corpus(
            chunks("m", &["one a", "two b", "three c", "four d", "five e"]),
            chunks("std", &["six f"]),
        );
        let e = OfflineEmbedder::new(64).unwrap();
        let hits = retrieve_chunks(&q, &c, RetrievalScorer::Dense(&e), &mut EmbeddingCache::in_memory(), RetrievalBudget::default()).unwrap();
        assert_eq!(hits.iter().filter(|h| h.source == Source::Mission).count(), 5);
        assert_eq!(hits.iter().filter(|h| h.source == Source::Domain).count(), 1);
        let ranks: Vec<_> = hits.iter().filter(|h| h.source == Source::Mission).map(|h| h.rank).collect();
        assert_eq!(ranks, [1, 2, 3, 4, 5]);
    }

    #[test]
    fn budgets_are_respected_and_zero_budget_is_allowed() {
        let t = default_taxonomy();
        let q = extend_query("shock", t.get(0).unwrap()).unwrap();
        let many: Vec<String> = (0..15).map(|i| format!("mission paragraph {i}")).collect();
        let refs: Vec<&str> = many.iter().map(String::as_str).collect();
        let c = corpus(chunks("m", &refs), chunks("std", &refs));
        let hits = retrieve_chunks(&q, &c, RetrievalScorer::Lexical, &mut EmbeddingCache::in_memory(),
            RetrievalBudget { k_mission: 3, k_domain: 0 }).unwrap();
        assert_eq!(hits.len(), 3);
        assert!(hits.iter().all(|h| h.source == Source::Mission));
    }

    #[test]
    fn lexical_ties_break_by_chunk_id() {
        let t = default_taxonomy();
        let q = extend_query("zzz", t.get(0).unwrap()).unwrap();
        let c = corpus(chunks("m", &["qqq", "www", "rrr"]), vec![]);
        let hits = retrieve_chunks(&q, &c, RetrievalScorer::Lexical, &mut EmbeddingCache::in_memory(), RetrievalBudget::default()).unwrap();
        let ids: Vec<_> = hits.iter().map(|h| h.chunk.chunk_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let t = default_taxonomy();
        let q = extend_query("x", t.get(0).unwrap()).unwrap();
        assert!(matches!(
            retrieve_chunks(&q, &corpus(vec![], vec![]), RetrievalScorer::Lexical, &mut EmbeddingCache::in_memory(), RetrievalBudget::default()),
            Err(RetrieveError::EmptyCorpus)
        ));
    }

    #[test]
    fn warm_cache_is_transparent() {
        let t = default_taxonomy();
        let q = extend_query(PAYLOAD_QUERY, t.get(0).unwrap()).unwrap();
        let texts: Vec<String> = (0..40).map(|i| format!("paragraph {i} on vibration and shock {}", i * 7 % 13)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let c = corpus(chunks("m", &refs[..20]), chunks("std", &refs[20..]));
        let e = OfflineEmbedder::new(128).unwrap();
        let mut cache = EmbeddingCache::in_memory();
        let cold = retrieve_chunks(&q, &c, RetrievalScorer::Dense(&e), &mut cache, RetrievalBudget::default()).unwrap();
        let warm = retrieve_chunks(&q, &c, RetrievalScorer::Dense(&e), &mut cache, RetrievalBudget::default()).unwrap();
        assert_eq!(serde_json::to_string(&cold).unwrap(), serde_json::to_string(&warm).unwrap());
        assert!(cache.hits() >= 41);
    }

    #[test]
    fn report_preview_is_80_chars() {
        let long = "x".repeat(200);
        let r = RetrievedChunk {
            chunk: DocumentChunk::new("m", 0, long, (0, 200)),
            score: 0.5,
            source: Source::Mission,
            rank: 1,
        };
        assert_eq!(RetrievalReportEntry::from(&r).preview.len(), 80);
    }
}

//! Neural labels for standards documents from embeddings.
//!
//! A document's label entry for category `c` is the raw dot product between
//! the document embedding and the embedding of `c`'s description. Nothing is
//! normalized, so entries can be large and negative when the embedder does
//! not produce unit vectors. [`LabelMetric::Cosine`] is available for
//! embedders whose magnitudes are not meaningful.
//!
//! Documents longer than the input limit are embedded per segment and the
//! segment vectors averaged. This approximates a long-context embedder
//! rather than reproducing one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{
    classify::{ClassifyError, LabelVariant, NeuralLabel},
    digest,
    ingest::SourceDocument,
    providers::{EmbedProvider, EmbeddingVector, ProviderError},
    store::EmbeddingCache,
    taxonomy::Taxonomy,
};

pub const DEFAULT_INPUT_LIMIT: usize = 8000;

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("embedding dimension mismatch: document {doc} vs category {category}")]
    DimensionMismatch { doc: usize, category: usize },
    #[error("no category embeddings given")]
    NoCategories,
    #[error("input limit must be positive")]
    ZeroInputLimit,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Label(#[from] ClassifyError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMetric {
    #[default]
    Dot,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub doc_id: String,
    pub label: NeuralLabel,
    pub embedding_dim: usize,
}

fn category_key(taxonomy: &Taxonomy, id: usize, description: &str) -> String {
    let h = digest::sha256_hex(description.as_bytes());
    format!("category:{}:{}:{}", taxonomy.version(), id, &h[..16])
}

/// One embedding per category description, in taxonomy order. Cached under
/// the taxonomy version and the embedder's model name.
pub fn embed_categories(
    taxonomy: &Taxonomy,
    embedder: &dyn EmbedProvider,
    cache: &mut EmbeddingCache,
) -> Result<Vec<EmbeddingVector>, LabelError> {
    let items: Vec<(String, &str)> = taxonomy
        .categories()
        .iter()
        .map(|c| (category_key(taxonomy, c.id, &c.description), c.description.as_str()))
        .collect();
    Ok(cache.embed_all(embedder, &items)?)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `values[c] = <doc, category[c]>` (or cosine under [`LabelMetric::Cosine`]).
pub fn label_document(
    subject_id: &str,
    doc_embedding: &EmbeddingVector,
    category_embeddings: &[EmbeddingVector],
    metric: LabelMetric,
) -> Result<NeuralLabel, LabelError> {
    if category_embeddings.is_empty() {
        return Err(LabelError::NoCategories);
    }
    let doc = doc_embedding.values();
    let mut values = Vec::with_capacity(category_embeddings.len());
    for c in category_embeddings {
        if c.dimension() != doc.len() {
            return Err(LabelError::DimensionMismatch {
                doc: doc.len(),
                category: c.dimension(),
            });
        }
        let d = dot(doc, c.values());
        values.push(match metric {
            LabelMetric::Dot => d,
            LabelMetric::Cosine => {
                let norms = dot(doc, doc).sqrt() * dot(c.values(), c.values()).sqrt();
                if norms == 0.0 {
                    0.0
                } else {
                    d / norms
                }
            }
        });
    }
    Ok(NeuralLabel::new(subject_id, LabelVariant::Similarities, values)?)
}

/// Splits `text` into segments of at most `limit` characters, packing whole
/// paragraphs (joined by a blank line) greedily. A paragraph longer than the
/// limit is cut at character boundaries.
pub fn segment_text(text: &str, limit: usize) -> Vec<String> {
    let mut segments = Vec::new();
    let mut current = String::new();
    let mut current_len = 0usize;

    fn flush(segments: &mut Vec<String>, current: &mut String, current_len: &mut usize) {
        if !current.is_empty() {
            segments.push(std::mem::take(current));
            *current_len = 0;
        }
    }

    for para in text.split("\n\n").map(str::trim).filter(|p| !p.is_empty()) {
        let len = para.chars().count();
        if len > limit {
            flush(&mut segments, &mut current, &mut current_len);
            let chars: Vec<char> = para.chars().collect();
            for piece in chars.chunks(limit) {
                let piece: String = piece.iter().collect();
                if !piece.trim().is_empty() {
                    segments.push(piece);
                }
            }
            continue;
        }
        let joined_len = if current.is_empty() {
            len
        } else {
            current_len + 2 + len
        };
        if joined_len > limit {
            flush(&mut segments, &mut current, &mut current_len);
        }
        if !current.is_empty() {
            current.push_str("\n\n");
            current_len += 2;
        }
        current.push_str(para);
        current_len += len;
    }
    flush(&mut segments, &mut current, &mut current_len);
    segments
}

/// Mean of per-segment embeddings; a single call when the text fits.
pub fn embed_long_document(
    doc: &SourceDocument,
    embedder: &dyn EmbedProvider,
    cache: &mut EmbeddingCache,
    input_limit: usize,
) -> Result<EmbeddingVector, LabelError> {
    if input_limit == 0 {
        return Err(LabelError::ZeroInputLimit);
    }
    let segments = if doc.text.chars().count() <= input_limit {
        vec![doc.text.clone()]
    } else {
        segment_text(&doc.text, input_limit)
    };
    let items: Vec<(String, &str)> = segments
        .iter()
        .map(|s| (format!("text:{}", digest::sha256_hex(s.as_bytes())), s.as_str()))
        .collect();
    let vectors = cache.embed_all(embedder, &items)?;
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; embedder.dimension()];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v.values()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(EmbeddingVector::new(mean)?)
}

pub fn label_domain_documents(
    docs: &[SourceDocument],
    taxonomy: &Taxonomy,
    embedder: &dyn EmbedProvider,
    cache: &mut EmbeddingCache,
    input_limit: usize,
    metric: LabelMetric,
) -> Result<Vec<LabeledDocument>, LabelError> {
    let categories = embed_categories(taxonomy, embedder, cache)?;
    docs.iter()
        .map(|doc| {
            let e = embed_long_document(doc, embedder, cache, input_limit)?;
            Ok(LabeledDocument {
                doc_id: doc.doc_id.clone(),
                label: label_document(&doc.doc_id, &e, &categories, metric)?,
                embedding_dim: e.dimension(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{
        ingest::DocKind,
        providers::{embed_text, offline_embed, OfflineEmbedder},
        taxonomy::default_taxonomy,
    };
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        inner: OfflineEmbedder,
        calls: AtomicUsize,
    }

    impl Counting {
        fn new(dim: usize) -> Self {
            Counting {
                inner: OfflineEmbedder::new(dim).unwrap(),
                calls: AtomicUsize::new(0),
            }
        }
    }

    impl EmbedProvider for Counting {
        fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.embed(text)
        }
        fn model_name(&self) -> &str {
            "counting"
        }
        fn dimension(&self) -> usize {
            self.inner.dimension()
        }
    }

    fn vec(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn seven_unit_category_vectors() {
        let e = OfflineEmbedder::new(256).unwrap();
        let vs = embed_categories(&default_taxonomy(), &e, &mut EmbeddingCache::in_memory()).unwrap();
        assert_eq!(vs.len(), 7);
        for v in &vs {
            assert!((dot(v.values(), v.values()).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_descriptions_give_identical_entries() {
        let t = Taxonomy::new("t", [("A", "same words"), ("B", "same words"), ("C", "other")]).unwrap();
        let e = OfflineEmbedder::new(128).unwrap();
        let cats = embed_categories(&t, &e, &mut EmbeddingCache::in_memory()).unwrap();
        assert_eq!(cats[0], cats[1]);
        let doc = offline_embed("some document text", 128).unwrap();
        let label = label_document("d", &doc, &cats, LabelMetric::Dot).unwrap();
        assert_eq!(label.values[0], label.values[1]);
    }

    #[test]
    fn category_embeddings_are_cached_per_version_and_model() {
        let e = Counting::new(64);
        let mut cache = EmbeddingCache::in_memory();
        let t = default_taxonomy();
        let first = embed_categories(&t, &e, &mut cache).unwrap();
        assert_eq!(e.calls.load(Ordering::SeqCst), 7);
        let second = embed_categories(&t, &e, &mut cache).unwrap();
        assert_eq!(e.calls.load(Ordering::SeqCst), 7);
        assert_eq!(first, second);

        let renamed = Taxonomy::new(
            "space-7/v2",
            t.categories().iter().map(|c| (c.name.clone(), c.description.clone())),
        )
        .unwrap();
        embed_categories(&renamed, &e, &mut cache).unwrap();
        assert_eq!(e.calls.load(Ordering::SeqCst), 14);
    }

    #[test]
    fn basis_vectors_project_components() {
        let e = vec(&[0.5, -2.0, 3.0, 7.0]);
        let basis: Vec<_> = (0..3)
            .map(|i| {
                let mut b = vec![0.0; 4];
                b[i] = 1.0;
                EmbeddingVector::new(b).unwrap()
            })
            .collect();
        let label = label_document("d", &e, &basis, LabelMetric::Dot).unwrap();
        assert_eq!(label.values, vec![0.5, -2.0, 3.0]);
        assert_eq!(label.variant, LabelVariant::Similarities);
    }

    #[test]
    fn matching_unit_vector_is_the_maximum() {
        let cats: Vec<_> = ["payload mass", "launch adapter", "orbit decay"]
            .iter()
            .map(|t| offline_embed(t, 256).unwrap())
            .collect();
        let label = label_document("d", &cats[1], &cats, LabelMetric::Dot).unwrap();
        assert!((label.values[1] - 1.0).abs() < 1e-12);
        assert!(label.values.iter().all(|v| *v <= label.values[1] + 1e-12));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = label_document("d", &vec(&[1.0, 0.0]), &[vec(&[1.0, 0.0, 0.0])], LabelMetric::Dot)
            .unwrap_err();
        assert!(matches!(err, LabelError::DimensionMismatch { doc: 2, category: 3 }));
    }

    #[test]
    fn short_document_is_one_call() {
        let e = Counting::new(128);
        let doc = SourceDocument::new("d", DocKind::Domain, "A short standard.\n\nTwo paras.", "m").unwrap();
        let v = embed_long_document(&doc, &e, &mut EmbeddingCache::in_memory(), 8000).unwrap();
        assert_eq!(v, embed_text(&e.inner, &doc.text).unwrap());
        assert_eq!(e.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn equal_segments_average_to_themselves() {
        let seg = "Structural loads shall be verified by test.";
        let doc = SourceDocument::new("d", DocKind::Domain, format!("{seg}\n\n{seg}"), "m").unwrap();
        let e = OfflineEmbedder::new(128).unwrap();
        let v = embed_long_document(&doc, &e, &mut EmbeddingCache::in_memory(), seg.len()).unwrap();
        let single = offline_embed(seg, 128).unwrap();
        for (a, b) in v.values().iter().zip(single.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn three_segments_match_brute_force_mean() {
        let paras = [
            "Thermal vacuum testing shall cover the qualification range.",
            "Electrical bonding shall keep resistance below ten milliohm.",
            "Software shall be verified against its requirements baseline.",
        ];
        let doc = SourceDocument::new("d", DocKind::Domain, paras.join("\n\n"), "m").unwrap();
        let e = OfflineEmbedder::new(256).unwrap();
        let got = embed_long_document(&doc, &e, &mut EmbeddingCache::in_memory(), 70).unwrap();

        // Oracle: embed each paragraph directly and average by hand.
        let mut mean = [0.0f64; 256];
        for p in paras {
            let v = offline_embed(p, 256).unwrap();
            for (m, x) in mean.iter_mut().zip(v.values()) {
                *m += x / 3.0;
            }
        }
        for (a, b) in got.values().iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn segmentation_rules() {
        assert_eq!(segment_text("aa\n\nbb\n\ncc", 6), vec!["aa\n\nbb", "cc"]);
        assert_eq!(segment_text("abcdefgh", 3), vec!["abc", "def", "gh"]);
        assert_eq!(segment_text("ab\n\nabcdefg", 4), vec!["ab", "abcd", "efg"]);
        for s in segment_text(&"word ".repeat(500), 64) {
            assert!(s.chars().count() <= 64);
        }
    }

    #[test]
    fn reported_label_form_is_representable() {
        let reported = vec![-15.7, -19.6, -15.3, -17.0, -11.6, -0.7, -16.9];
        let label = NeuralLabel::new("ecss", LabelVariant::Similarities, reported.clone()).unwrap();
        let json = serde_json::to_string(&label).unwrap();
        let back: NeuralLabel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.values, reported);
    }

    proptest! {
        #[test]
        fn label_is_linear_in_the_document(
            doc in prop::collection::vec(-10.0f64..10.0, 8),
            cats in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 2..9),
            alpha in -50.0f64..50.0,
        ) {
            let cats: Vec<_> = cats.into_iter().map(|c| EmbeddingVector::new(c).unwrap()).collect();
            let e = EmbeddingVector::new(doc).unwrap();
            let base = label_document("d", &e, &cats, LabelMetric::Dot).unwrap();
            let scaled = label_document("d", &e.scaled(alpha).unwrap(), &cats, LabelMetric::Dot).unwrap();
            prop_assert_eq!(base.values.len(), cats.len());
            for (s, b) in scaled.values.iter().zip(&base.values) {
                prop_assert!((s - alpha * b).abs() <= 1e-9 * (1.0 + (alpha * b).abs()));
            }
        }
    }
}

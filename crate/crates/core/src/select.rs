//! Selection of standards documents whose label resembles the mission's.
//!
//! The mission label holds chunk counts and domain labels hold dot products,
//! so the two live on unrelated scales. Cosine similarity ignores magnitude,
//! which makes the comparison well defined. A document is kept when its
//! cosine is strictly above the threshold (default 0); `top_k` optionally
//! caps how many are kept.

use std::{cmp::Ordering, collections::BTreeMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{
    classify::{LabelVariant, NeuralLabel},
    domain_label::LabeledDocument,
    ingest::DocumentChunk,
};

pub const DEFAULT_THRESHOLD: f64 = 0.0;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity is undefined for an all-zero vector")]
    ZeroVector,
    #[error("mission label is all zero")]
    ZeroMissionLabel,
    #[error("domain document {0} has an all-zero label")]
    ZeroDomainLabel(String),
    #[error("domain document {doc_id} has a label of length {got}, expected {expected}")]
    WrongK {
        doc_id: String,
        expected: usize,
        got: usize,
    },
    #[error("mission label must be a counts or soft label, got similarities")]
    WrongVariant,
    #[error("threshold must be finite")]
    BadThreshold,
    #[error("selected document {0} has no chunks")]
    MissingChunks(String),
}

/// `<a,b> / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SelectError> {
    if a.len() != b.len() {
        return Err(SelectError::LengthMismatch(a.len(), b.len()));
    }
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(SelectError::ZeroVector);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Every candidate, cosine descending, ties by doc id ascending.
    pub ranked: Vec<RankedDoc>,
    pub threshold: f64,
    pub top_k: Option<usize>,
    pub selected_ids: Vec<String>,
}

impl SelectionResult {
    pub fn is_selected(&self, doc_id: &str) -> bool {
        self.selected_ids.iter().any(|d| d == doc_id)
    }

    /// One row per candidate for the selection report.
    pub fn report(&self) -> Vec<SelectionEntry> {
        self.ranked
            .iter()
            .enumerate()
            .map(|(i, r)| SelectionEntry {
                rank: i + 1,
                doc_id: r.doc_id.clone(),
                cosine: r.cosine,
                selected: self.is_selected(&r.doc_id),
            })
            .collect()
    }

    /// Inverse of [`SelectionResult::report`].
    pub fn from_report(entries: &[SelectionEntry], threshold: f64, top_k: Option<usize>) -> Self {
        let mut entries = entries.to_vec();
        entries.sort_by_key(|e| e.rank);
        SelectionResult {
            ranked: entries
                .iter()
                .map(|e| RankedDoc {
                    doc_id: e.doc_id.clone(),
                    cosine: e.cosine,
                })
                .collect(),
            threshold,
            top_k,
            selected_ids: entries
                .iter()
                .filter(|e| e.selected)
                .map(|e| e.doc_id.clone())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub rank: usize,
    pub doc_id: String,
    pub cosine: f64,
    pub selected: bool,
}

pub fn select_domain_docs(
    mission_label: &NeuralLabel,
    domain_labels: &[LabeledDocument],
    threshold: f64,
    top_k: Option<usize>,
) -> Result<SelectionResult, SelectError> {
    if !threshold.is_finite() {
        return Err(SelectError::BadThreshold);
    }
    if mission_label.variant == LabelVariant::Similarities {
        return Err(SelectError::WrongVariant);
    }
    if mission_label.values.iter().all(|v| *v == 0.0) {
        return Err(SelectError::ZeroMissionLabel);
    }
    let k = mission_label.k();
    let mut ranked = Vec::with_capacity(domain_labels.len());
    for d in domain_labels {
        if d.label.k() != k {
            return Err(SelectError::WrongK {
                doc_id: d.doc_id.clone(),
                expected: k,
                got: d.label.k(),
            });
        }
        let cosine = match cosine_similarity(&mission_label.values, &d.label.values) {
            Err(SelectError::ZeroVector) => return Err(SelectError::ZeroDomainLabel(d.doc_id.clone())),
            other => other?,
        };
        ranked.push(RankedDoc {
            doc_id: d.doc_id.clone(),
            cosine,
        });
    }
    ranked.sort_by(|a, b| {
        b.cosine
            .partial_cmp(&a.cosine)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    let selected_ids: Vec<String> = ranked
        .iter()
        .filter(|r| r.cosine > threshold)
        .take(top_k.unwrap_or(usize::MAX))
        .map(|r| r.doc_id.clone())
        .collect();
    Ok(SelectionResult {
        ranked,
        threshold,
        top_k,
        selected_ids,
    })
}

/// Mission chunks plus the chunks of every selected standards document.
#[derive(Debug, Clone, PartialEq)]
pub struct RequirementsCorpus {
    pub mission_chunks: Vec<DocumentChunk>,
    pub domain_chunks: Vec<DocumentChunk>,
    pub selection: SelectionResult,
}

impl RequirementsCorpus {
    pub fn len(&self) -> usize {
        self.mission_chunks.len() + self.domain_chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Domain chunks are ordered by selection rank, then ordinal.
pub fn build_requirements_corpus(
    mission_chunks: Vec<DocumentChunk>,
    domain_chunks: &BTreeMap<String, Vec<DocumentChunk>>,
    selection: SelectionResult,
) -> Result<RequirementsCorpus, SelectError> {
    if selection.selected_ids.is_empty() {
        log::warn!("no standards document selected; the requirements corpus holds mission chunks only");
    }
    let mut selected = Vec::new();
    for id in &selection.selected_ids {
        let chunks = domain_chunks
            .get(id)
            .ok_or_else(|| SelectError::MissingChunks(id.clone()))?;
        selected.extend(chunks.iter().cloned());
    }
    Ok(RequirementsCorpus {
        mission_chunks,
        domain_chunks: selected,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn counts(v: &[f64]) -> NeuralLabel {
        NeuralLabel::new("mission", LabelVariant::Counts, v.to_vec()).unwrap()
    }

    fn domain(id: &str, v: &[f64]) -> LabeledDocument {
        LabeledDocument {
            doc_id: id.into(),
            label: NeuralLabel::new(id, LabelVariant::Similarities, v.to_vec()).unwrap(),
            embedding_dim: 16,
        }
    }

    #[test]
    fn cosine_fixtures() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let reported = [60.0, 291.0, 72.0, 8.0, 31.0, 25.0, 0.0];
        assert!((cosine_similarity(&reported, &reported).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine_similarity(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]), Err(SelectError::ZeroVector)));
        assert!(matches!(cosine_similarity(&[1.0], &[1.0, 1.0]), Err(SelectError::LengthMismatch(1, 2))));
    }

    #[test]
    fn threshold_is_strict() {
        // mission = e0; cosines: a = 0.4, b = -0.2, c = 0.0 exactly.
        let m = counts(&[1.0, 0.0]);
        let a = domain("a", &[0.4, (1.0f64 - 0.16).sqrt()]);
        let b = domain("b", &[-0.2, (1.0f64 - 0.04).sqrt()]);
        let c = domain("c", &[0.0, 1.0]);
        let s = select_domain_docs(&m, &[a, b, c], 0.0, None).unwrap();
        assert_eq!(s.selected_ids, vec!["a"]);
        let order: Vec<_> = s.ranked.iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(order, ["a", "c", "b"]);
    }

    #[test]
    fn top_k_truncates() {
        let m = counts(&[1.0, 0.0]);
        let s = select_domain_docs(
            &m,
            &[domain("x", &[0.3, (0.91f64).sqrt()]), domain("y", &[0.4, (0.84f64).sqrt()])],
            0.0,
            Some(1),
        )
        .unwrap();
        assert_eq!(s.selected_ids, vec!["y"]);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let zero = NeuralLabel::new("m", LabelVariant::Counts, vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            select_domain_docs(&zero, &[domain("a", &[1.0, 1.0])], 0.0, None),
            Err(SelectError::ZeroMissionLabel)
        ));
        assert!(matches!(
            select_domain_docs(&counts(&[1.0, 0.0]), &[domain("a", &[1.0, 1.0, 1.0])], 0.0, None),
            Err(SelectError::WrongK { .. })
        ));
        assert!(matches!(
            select_domain_docs(&counts(&[1.0, 0.0]), &[], f64::NAN, None),
            Err(SelectError::BadThreshold)
        ));
    }

    #[test]
    fn ties_break_by_doc_id() {
        let m = counts(&[1.0, 1.0]);
        let s = select_domain_docs(&m, &[domain("b", &[2.0, 2.0]), domain("a", &[1.0, 1.0])], 0.0, None)
            .unwrap();
        assert_eq!(s.selected_ids, vec!["a", "b"]);
    }

    fn chunks_for(doc: &str, n: usize) -> Vec<DocumentChunk> {
        (0..n)
            .map(|i| DocumentChunk::new(doc, i, format!("{doc} paragraph {i}"), (0, 1)))
            .collect()
    }

    fn selection(ids: &[&str]) -> SelectionResult {
        SelectionResult {
            ranked: vec![],
            threshold: 0.0,
            top_k: None,
            selected_ids: ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn corpus_membership() {
        let docs: BTreeMap<_, _> = (1..=5)
            .map(|i| (format!("d{i}"), chunks_for(&format!("d{i}"), i)))
            .collect();
        let mission = chunks_for("m", 3);

        let none = build_requirements_corpus(mission.clone(), &docs, selection(&[])).unwrap();
        assert_eq!(none.len(), 3);

        let all = build_requirements_corpus(mission.clone(), &docs, selection(&["d1", "d2", "d3", "d4", "d5"])).unwrap();
        assert_eq!(all.len(), 3 + 15);

        let two = build_requirements_corpus(mission.clone(), &docs, selection(&["d4", "d2"])).unwrap();
        let got: BTreeSet<_> = two.domain_chunks.iter().map(|c| c.chunk_id.clone()).collect();
        let want: BTreeSet<_> = docs["d4"].iter().chain(&docs["d2"]).map(|c| c.chunk_id.clone()).collect();
        assert_eq!(got, want);
        assert!(two.domain_chunks.iter().all(|c| two.selection.is_selected(&c.doc_id)));
        assert_eq!(two.domain_chunks[0].doc_id, "d4");

        assert!(matches!(
            build_requirements_corpus(mission, &docs, selection(&["d9"])),
            Err(SelectError::MissingChunks(_))
        ));
    }

    #[test]
    fn report_round_trip() {
        let m = counts(&[3.0, 1.0, 0.0]);
        let docs = [domain("a", &[1.0, -2.0, 0.5]), domain("b", &[2.0, 1.0, 0.0]), domain("c", &[-1.0, 0.0, 0.0])];
        let s = select_domain_docs(&m, &docs, 0.0, None).unwrap();
        assert_eq!(SelectionResult::from_report(&s.report(), 0.0, None), s);
    }

    proptest! {
        #[test]
        fn scaling_mission_counts_changes_nothing(
            m in prop::collection::vec(0u32..50, 7).prop_filter("nonzero", |v| v.iter().any(|x| *x > 0)),
            docs in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 7), 1..20),
            factor in 2u32..9,
        ) {
            let labels: Vec<_> = docs.iter().enumerate().map(|(i, v)| domain(&format!("d{i:02}"), v)).collect();
            let base = counts(&m.iter().map(|x| *x as f64).collect::<Vec<_>>());
            let scaled = counts(&m.iter().map(|x| (x * factor) as f64).collect::<Vec<_>>());
            let a = select_domain_docs(&base, &labels, 0.0, None).unwrap();
            let b = select_domain_docs(&scaled, &labels, 0.0, None).unwrap();
            let order = |s: &SelectionResult| s.ranked.iter().map(|r| r.doc_id.clone()).collect::<Vec<_>>();
            prop_assert_eq!(order(&a), order(&b));
            prop_assert_eq!(a.selected_ids, b.selected_ids);
        }

        #[test]
        fn raising_the_threshold_never_adds(
            docs in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 7), 1..30),
            t1 in -1.0f64..1.0,
            dt in 0.0f64..1.0,
        ) {
            let labels: Vec<_> = docs.iter().enumerate().map(|(i, v)| domain(&format!("d{i:02}"), v)).collect();
            let m = counts(&[60.0, 291.0, 72.0, 8.0, 31.0, 25.0, 0.0]);
            let low = select_domain_docs(&m, &labels, t1, None).unwrap();
            let high = select_domain_docs(&m, &labels, t1 + dt, None).unwrap();
            for id in &high.selected_ids {
                prop_assert!(low.selected_ids.contains(id));
            }
        }
    }
}

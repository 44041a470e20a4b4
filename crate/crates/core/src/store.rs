//! Line-oriented persistence.
//!
//! Every artifact is UTF-8 JSON, one record per line. Fields this version
//! does not know about are kept in [`Record::extra`] and written back
//! unchanged. Workspace layout:
//!
//! ```text
//! corpus/documents.index      one DocumentEntry per ingested document
//! corpus/<doc_id>.txt         reconstructed text, for manual review
//! corpus/<doc_id>.chunks      DocumentChunk records, ordinal order
//! labels/mission.assignments  ChunkAssignment per mission chunk
//! labels/mission.label        the mission NeuralLabel
//! labels/domain.index         LabeledDocument per domain document
//! labels/selection.report     SelectionEntry per domain document, ranked
//! cache/embeddings.cache      CacheEntry records, append-only
//! out/<query-slug>/retrieval.report
//! out/<query-slug>/prompt.txt
//! out/<query-slug>/answer.record
//! ```

use std::{
    collections::{BTreeMap, HashMap},
    fs::{self, File, OpenOptions},
    io::{BufRead, BufReader, BufWriter, Write},
    path::{Path, PathBuf},
};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::{
    digest,
    ingest::DocumentChunk,
    par::bounded_map,
    providers::{embed_text, EmbedProvider, EmbeddingVector, ProviderError},
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: chunk id does not match its doc_id/ordinal/text")]
    ChunkIdMismatch { path: String, line: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A typed record plus whatever other fields were on its line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record<T> {
    #[serde(flatten)]
    pub value: T,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl<T> Record<T> {
    pub fn new(value: T) -> Self {
        Record {
            value,
            extra: BTreeMap::new(),
        }
    }
}

fn encode<T: Serialize>(record: &T) -> String {
    let mut line = serde_json::to_string(record).expect("records serialize");
    line.push('\n');
    line
}

/// Replaces `path` with `text`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

/// Replaces `path` with `records`, one JSON object per line.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut out = BufWriter::new(file);
        for r in records {
            out.write_all(encode(r).as_bytes()).map_err(io_err(&tmp))?;
        }
        out.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn append_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), StoreError> {
    if records.is_empty() {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        out.write_all(encode(r).as_bytes()).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads every line as a `T`; the first bad line fails the whole read with
/// its 1-based line number. Blank lines are skipped.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_chunks(path: &Path, chunks: &[Record<DocumentChunk>]) -> Result<(), StoreError> {
    write_records(path, chunks)
}

/// Reads a corpus file and re-derives every chunk id.
pub fn read_chunks(path: &Path) -> Result<Vec<Record<DocumentChunk>>, StoreError> {
    let records: Vec<Record<DocumentChunk>> = read_records(path)?;
    for (i, r) in records.iter().enumerate() {
        let c = &r.value;
        if digest::chunk_id(&c.doc_id, c.ordinal, &c.text) != c.chunk_id {
            return Err(StoreError::ChunkIdMismatch {
                path: path.display().to_string(),
                line: i + 1,
            });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub model_name: String,
    pub dimension: usize,
    pub vector: Vec<f64>,
}

/// Embeddings keyed by `(key, model_name)`; an entry only answers lookups
/// for its own model and dimension.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: HashMap<(String, String), CacheEntry>,
    unsaved: Vec<CacheEntry>,
    hits: usize,
    misses: usize,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) a cache file. Lines that do not parse are skipped
    /// with a warning; they count as misses.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let mut cache = EmbeddingCache {
            path: Some(path.clone()),
            ..Self::default()
        };
        if !path.exists() {
            return Ok(cache);
        }
        let file = File::open(&path).map_err(io_err(&path))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(io_err(&path))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CacheEntry>(&line) {
                Ok(e) if e.vector.len() == e.dimension && e.vector.iter().all(|v| v.is_finite()) => {
                    cache
                        .entries
                        .insert((e.key.clone(), e.model_name.clone()), e);
                }
                Ok(_) => log::warn!("{}:{}: inconsistent cache entry ignored", path.display(), i + 1),
                Err(err) => log::warn!("{}:{}: corrupt cache entry ignored: {err}", path.display(), i + 1),
            }
        }
        Ok(cache)
    }

    pub fn lookup(&mut self, key: &str, model_name: &str, dimension: usize) -> Option<EmbeddingVector> {
        let hit = self
            .entries
            .get(&(key.to_owned(), model_name.to_owned()))
            .filter(|e| e.dimension == dimension)
            .and_then(|e| EmbeddingVector::new(e.vector.clone()).ok());
        if hit.is_some() {
            self.hits += 1;
        } else {
            self.misses += 1;
        }
        hit
    }

    pub fn insert(&mut self, key: &str, model_name: &str, vector: &EmbeddingVector) {
        let entry = CacheEntry {
            key: key.to_owned(),
            model_name: model_name.to_owned(),
            dimension: vector.dimension(),
            vector: vector.values().to_vec(),
        };
        let slot = (entry.key.clone(), entry.model_name.clone());
        if self.entries.get(&slot) != Some(&entry) {
            self.unsaved.push(entry.clone());
            self.entries.insert(slot, entry);
        }
    }

    /// Appends entries added since the last flush to the backing file.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        if let Some(path) = &self.path {
            append_records(path, &self.unsaved)?;
        }
        self.unsaved.clear();
        Ok(())
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn misses(&self) -> usize {
        self.misses
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Embeds `(key, text)` pairs, consulting the cache first. Misses are
    /// computed at most `embedder.concurrency()` at a time and inserted in
    /// input order.
    pub fn embed_all(
        &mut self,
        embedder: &dyn EmbedProvider,
        items: &[(String, &str)],
    ) -> Result<Vec<EmbeddingVector>, ProviderError> {
        let model = embedder.model_name().to_owned();
        let dim = embedder.dimension();
        let mut out: Vec<Option<EmbeddingVector>> = items
            .iter()
            .map(|(key, _)| self.lookup(key, &model, dim))
            .collect();
        let missing: Vec<usize> = (0..items.len()).filter(|&i| out[i].is_none()).collect();
        let computed = bounded_map(&missing, embedder.concurrency(), |&i| {
            embed_text(embedder, items[i].1)
        })?;
        for (i, v) in missing.into_iter().zip(computed) {
            self.insert(&items[i].0, &model, &v);
            out[i] = Some(v);
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

/// Paths of every artifact under a workspace root.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Workspace { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn documents_index(&self) -> PathBuf {
        self.root.join("corpus").join("documents.index")
    }

    pub fn chunks(&self, doc_id: &str) -> PathBuf {
        self.root.join("corpus").join(format!("{doc_id}.chunks"))
    }

    pub fn reconstructed_text(&self, doc_id: &str) -> PathBuf {
        self.root.join("corpus").join(format!("{doc_id}.txt"))
    }

    pub fn mission_assignments(&self) -> PathBuf {
        self.root.join("labels").join("mission.assignments")
    }

    pub fn mission_label(&self) -> PathBuf {
        self.root.join("labels").join("mission.label")
    }

    pub fn domain_index(&self) -> PathBuf {
        self.root.join("labels").join("domain.index")
    }

    pub fn selection_report(&self) -> PathBuf {
        self.root.join("labels").join("selection.report")
    }

    pub fn embedding_cache(&self) -> PathBuf {
        self.root.join("cache").join("embeddings.cache")
    }

    pub fn output_dir(&self, query: &str) -> PathBuf {
        self.root.join("out").join(query_slug(query))
    }
}

/// Lowercase ASCII words joined by `-`, at most 48 characters, followed by
/// the first 8 hex digits of the query hash so distinct queries never share
/// a directory.
pub fn query_slug(query: &str) -> String {
    let mut slug = String::new();
    for word in query
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if slug.len() + word.len() + 1 > 48 {
            break;
        }
        if !slug.is_empty() {
            slug.push('-');
        }
        slug.push_str(&word.to_ascii_lowercase());
    }
    let hash = digest::sha256_hex(query.as_bytes());
    if slug.is_empty() {
        format!("query-{}", &hash[..8])
    } else {
        format!("{slug}-{}", &hash[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::OfflineEmbedder;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn chunks() -> Vec<Record<DocumentChunk>> {
        ["First paragraph text.", "Second paragraph text.", "Third paragraph text."]
            .iter()
            .enumerate()
            .map(|(i, t)| Record::new(DocumentChunk::new("doc", i, t.to_string(), (i * 30, i * 30 + t.len()))))
            .collect()
    }

    #[test]
    fn chunk_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus/doc.chunks");
        write_chunks(&path, &chunks()).unwrap();
        assert_eq!(read_chunks(&path).unwrap(), chunks());
    }

    #[test]
    fn empty_file_reads_as_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.chunks");
        fs::write(&path, "").unwrap();
        assert!(read_chunks(&path).unwrap().is_empty());
    }

    #[test]
    fn truncated_last_line_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.chunks");
        write_chunks(&path, &chunks()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() - 20]).unwrap();
        match read_chunks(&path) {
            Err(StoreError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected malformed line 3, got {other:?}"),
        }
    }

    #[test]
    fn tampered_text_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.chunks");
        write_chunks(&path, &chunks()).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("Second", "Changed");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            read_chunks(&path),
            Err(StoreError::ChunkIdMismatch { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_fields_survive_rewrite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.chunks");
        let c = DocumentChunk::new("doc", 0, "Some paragraph text.".into(), (0, 20));
        let mut line = serde_json::to_value(&c).unwrap();
        line["reviewed_by"] = serde_json::json!("analyst");
        fs::write(&path, format!("{line}\n")).unwrap();

        let records = read_chunks(&path).unwrap();
        assert_eq!(records[0].extra["reviewed_by"], "analyst");
        let copy = dir.path().join("copy.chunks");
        write_chunks(&copy, &records).unwrap();
        let reread: serde_json::Value =
            serde_json::from_str(fs::read_to_string(&copy).unwrap().trim()).unwrap();
        assert_eq!(reread["reviewed_by"], "analyst");
        assert_eq!(reread["chunk_id"], c.chunk_id.as_str());
    }

    #[test]
    fn writes_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        write_chunks(&a, &chunks()).unwrap();
        write_chunks(&b, &chunks()).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }

    #[test]
    fn cache_hits_only_for_matching_model_and_dimension() {
        let mut cache = EmbeddingCache::in_memory();
        let v = EmbeddingVector::new(vec![0.6, 0.8]).unwrap();
        cache.insert("k", "model-a", &v);
        assert_eq!(cache.lookup("k", "model-a", 2), Some(v));
        assert_eq!(cache.lookup("k", "model-b", 2), None);
        assert_eq!(cache.lookup("k", "model-a", 3), None);
        assert_eq!(cache.lookup("other", "model-a", 2), None);
        assert_eq!((cache.hits(), cache.misses()), (1, 3));
    }

    #[test]
    fn cache_persists_and_skips_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache/embeddings.cache");
        let mut cache = EmbeddingCache::open(&path).unwrap();
        cache.insert("a", "m", &EmbeddingVector::new(vec![1.0, 0.0]).unwrap());
        cache.insert("b", "m", &EmbeddingVector::new(vec![0.0, 1.0]).unwrap());
        cache.flush().unwrap();
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"key\":\"c\",\"model_name\"\n");
        text.push_str("{\"key\":\"d\",\"model_name\":\"m\",\"dimension\":3,\"vector\":[1.0]}\n");
        fs::write(&path, text).unwrap();

        let mut reopened = EmbeddingCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert!(reopened.lookup("a", "m", 2).is_some());
        assert!(reopened.lookup("d", "m", 3).is_none());
    }

    struct Counting {
        inner: OfflineEmbedder,
        calls: AtomicUsize,
    }

    impl EmbedProvider for Counting {
        fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.embed(text)
        }
        fn model_name(&self) -> &str {
            self.inner.model_name()
        }
        fn dimension(&self) -> usize {
            self.inner.dimension()
        }
    }

    #[test]
    fn warm_cache_makes_no_provider_calls() {
        let embedder = Counting {
            inner: OfflineEmbedder::new(64).unwrap(),
            calls: AtomicUsize::new(0),
        };
        let texts: Vec<String> = (0..100).map(|i| format!("chunk number {i}")).collect();
        let items: Vec<(String, &str)> = texts
            .iter()
            .map(|t| (digest::sha256_hex(t.as_bytes()), t.as_str()))
            .collect();
        let mut cache = EmbeddingCache::in_memory();
        let cold = cache.embed_all(&embedder, &items).unwrap();
        assert_eq!(embedder.calls.load(Ordering::SeqCst), 100);

        let hits_before = cache.hits();
        let warm = cache.embed_all(&embedder, &items).unwrap();
        assert_eq!(cache.hits() - hits_before, 100);
        assert_eq!(embedder.calls.load(Ordering::SeqCst), 100);
        assert_eq!(cold, warm);
    }

    #[test]
    fn slugs() {
        let s = query_slug("Payload Design Constraints: Outline requirements");
        assert!(s.starts_with("payload-design-constraints-outline-requirements-"));
        assert_ne!(query_slug("a b"), query_slug("a-b"));
        assert!(query_slug("???").starts_with("query-"));
    }
}

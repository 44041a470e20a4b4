//! Workspace-backed stage runner used by the command-line front end.
//!
//! Each stage reads its predecessors' artifacts from the [`Workspace`],
//! writes its own, and returns a summary whose `Display` is one line.

use std::{
    collections::BTreeMap,
    fmt, fs,
    path::{Path, PathBuf},
};

use serde::{Deserialize, Serialize};

use crate::{
    classify::{
        aggregate_neural_label, aggregate_soft_label, assign_category, score_chunks,
        NeuralLabel, Scorer,
    },
    domain_label::{label_domain_documents, LabelMetric, LabeledDocument, DEFAULT_INPUT_LIMIT},
    error::{Error, Result},
    generate::{build_prompt, generate_answer, GeneratedOutput},
    ingest::{
        chunk_document, doc_id_from_path, reconstruct_paragraphs, DocKind, DocumentChunk,
        ReconstructMode, SourceDocument, DEFAULT_MIN_CHUNK_CHARS,
    },
    providers::{
        ChatProvider, EmbedProvider, HttpChatConfig, HttpChatProvider, HttpEmbedConfig,
        HttpEmbedProvider, MockChat, OfflineEmbedder, MIN_OFFLINE_DIMENSION,
    },
    retrieve::{
        extend_query, retrieve_chunks, ExtendedQuery, RetrievalBudget, RetrievalReportEntry,
        RetrievalScorer, RetrievedChunk, Source, DEFAULT_K_DOMAIN, DEFAULT_K_MISSION,
    },
    select::{
        build_requirements_corpus, select_domain_docs, SelectionEntry, SelectionResult,
        DEFAULT_THRESHOLD,
    },
    store::{
        read_chunks, read_records, write_chunks, write_records, write_text, EmbeddingCache, Record,
        Workspace,
    },
    taxonomy::{default_taxonomy, Category, Taxonomy},
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerMode {
    #[default]
    Llm,
    Lexical,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedMode {
    #[default]
    Remote,
    Offline,
}

fn default_workspace() -> PathBuf {
    PathBuf::from("workspace")
}
fn default_min_chars() -> usize {
    DEFAULT_MIN_CHUNK_CHARS
}
fn default_offline_dimension() -> usize {
    384
}
fn default_input_limit() -> usize {
    DEFAULT_INPUT_LIMIT
}
fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_k_mission() -> usize {
    DEFAULT_K_MISSION
}
fn default_k_domain() -> usize {
    DEFAULT_K_DOMAIN
}

/// Contents of the TOML configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Category file; the built-in seven-category taxonomy when absent.
    #[serde(default)]
    pub taxonomy: Option<PathBuf>,
    #[serde(default = "default_workspace")]
    pub workspace: PathBuf,
    #[serde(default)]
    pub scorer: ScorerMode,
    #[serde(default)]
    pub embed_mode: EmbedMode,
    #[serde(default)]
    pub preprocess: ReconstructMode,
    #[serde(default = "default_min_chars")]
    pub chunk_min_chars: usize,
    /// Vector length of the offline embedder.
    #[serde(default = "default_offline_dimension")]
    pub offline_dimension: usize,
    /// Characters per embedding request for long standards documents.
    #[serde(default = "default_input_limit")]
    pub input_limit: usize,
    /// Standards are kept when their label cosine is strictly above this.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub top_k: Option<usize>,
    /// Mission chunks placed in the prompt.
    #[serde(default = "default_k_mission")]
    pub k_mission: usize,
    /// Standards chunks placed in the prompt.
    #[serde(default = "default_k_domain")]
    pub k_domain: usize,
    /// Sum normalized score vectors instead of counting argmax assignments.
    #[serde(default)]
    pub soft_labels: bool,
    #[serde(default)]
    pub label_metric: LabelMetric,
    #[serde(default)]
    pub chat: Option<HttpChatConfig>,
    #[serde(default)]
    pub embed: Option<HttpEmbedConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

impl PipelineConfig {
    pub fn parse(source: &str) -> Result<Self> {
        toml::from_str(source).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config file. Relative `taxonomy` and `workspace` paths are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(t) = &config.taxonomy {
            config.taxonomy = Some(base.join(t));
        }
        config.workspace = base.join(&config.workspace);
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        if self.chunk_min_chars == 0 {
            return Err(Error::Config("chunk_min_chars must be at least 1".into()));
        }
        if self.input_limit == 0 {
            return Err(Error::Config("input_limit must be at least 1".into()));
        }
        if self.offline_dimension < MIN_OFFLINE_DIMENSION {
            return Err(Error::Config(format!(
                "offline_dimension must be at least {MIN_OFFLINE_DIMENSION}"
            )));
        }
        if let Some(t) = &self.taxonomy {
            if !t.is_file() {
                return Err(Error::Config(format!("taxonomy file {} not found", t.display())));
            }
        }
        Ok(())
    }
}

/// Command-line adjustments applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub workspace: Option<PathBuf>,
    pub offline: bool,
    pub threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub k_mission: Option<usize>,
    pub k_domain: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut PipelineConfig) {
        if let Some(w) = &self.workspace {
            config.workspace = w.clone();
        }
        if self.offline {
            config.scorer = ScorerMode::Lexical;
            config.embed_mode = EmbedMode::Offline;
            config.preprocess = ReconstructMode::Heuristic;
        }
        if let Some(t) = self.threshold {
            config.threshold = t;
        }
        if self.top_k.is_some() {
            config.top_k = self.top_k;
        }
        if let Some(k) = self.k_mission {
            config.k_mission = k;
        }
        if let Some(k) = self.k_domain {
            config.k_domain = k;
        }
    }
}

/// One line of `corpus/documents.index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_id: String,
    pub kind: DocKind,
    pub origin: String,
    pub chunks: usize,
    pub text_sha256: String,
}

/// One line of `labels/mission.assignments`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub chunk_id: String,
    pub doc_id: String,
    pub category_id: usize,
    pub category: String,
    pub scores: Vec<f64>,
}

/// `labels/mission.label` and each line of `labels/domain.index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub taxonomy_version: String,
    pub label: NeuralLabel,
}

/// `out/<slug>/query.record`: what the retrieval report answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: String,
    pub category: String,
    pub extended_query: String,
}

/// `out/<slug>/answer.record`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub query: String,
    pub category: String,
    pub mission_name: String,
    #[serde(flatten)]
    pub output: GeneratedOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub kind: DocKind,
    pub documents: usize,
    pub chunks: usize,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ingest: {} {} document(s), {} chunk(s)",
            self.documents, self.kind, self.chunks
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifySummary {
    pub chunks: usize,
    pub label: NeuralLabel,
}

impl fmt::Display for ClassifySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "classify: {} mission chunk(s), label {}", self.chunks, fmt_values(&self.label.values))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelDomainSummary {
    pub documents: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

impl fmt::Display for LabelDomainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "label-domain: {} standards document(s) labelled, cache {} hit(s) / {} miss(es)",
            self.documents, self.cache_hits, self.cache_misses
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectSummary {
    pub selection: SelectionResult,
}

impl fmt::Display for SelectSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = &self.selection;
        write!(
            f,
            "select: {} of {} standards document(s) above cosine {}",
            s.selected_ids.len(),
            s.ranked.len(),
            s.threshold
        )?;
        if let Some(k) = s.top_k {
            write!(f, " (top {k})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrieveSummary {
    pub hits: Vec<RetrievedChunk>,
    pub report: PathBuf,
}

impl fmt::Display for RetrieveSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mission = self.hits.iter().filter(|h| h.source == Source::Mission).count();
        write!(
            f,
            "retrieve: {} mission + {} standards chunk(s) -> {}",
            mission,
            self.hits.len() - mission,
            self.report.display()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub output: GeneratedOutput,
    pub record: PathBuf,
}

impl fmt::Display for GenerateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "generate: {} chars from {}, {} traced chunk(s) -> {}",
            self.output.answer.chars().count(),
            self.output.provider_model,
            self.output.trace.len(),
            self.record.display()
        )
    }
}

fn fmt_values(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Inputs of a full run.
#[derive(Debug, Clone)]
pub struct PipelineRequest {
    pub mission: Vec<PathBuf>,
    pub domain: Vec<PathBuf>,
    pub query: String,
    pub category: String,
    pub mission_name: String,
    pub dump_prompt: bool,
}

/// Summaries of every stage of a full run, in order.
#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub lines: Vec<String>,
    pub output: GeneratedOutput,
    pub record: PathBuf,
}

pub struct Pipeline {
    config: PipelineConfig,
    workspace: Workspace,
    taxonomy: Taxonomy,
    offline: bool,
    chat: Option<Box<dyn ChatProvider>>,
    embed: Box<dyn EmbedProvider>,
}

impl Pipeline {
    /// Builds every provider the config names. Nothing touches the network
    /// here; credential variables and endpoints are checked up front.
    pub fn new(config: PipelineConfig, offline: bool) -> Result<Self> {
        config.validate()?;
        let taxonomy = match &config.taxonomy {
            Some(path) => Taxonomy::load(path)?,
            None => default_taxonomy(),
        };
        let embed: Box<dyn EmbedProvider> = match config.embed_mode {
            EmbedMode::Offline => Box::new(OfflineEmbedder::new(config.offline_dimension)?),
            EmbedMode::Remote => {
                let cfg = config.embed.clone().ok_or_else(|| {
                    Error::Config("embed_mode is remote but no [embed] section is configured".into())
                })?;
                Box::new(HttpEmbedProvider::new(cfg)?)
            }
        };
        let chat: Option<Box<dyn ChatProvider>> = if offline {
            Some(Box::new(MockChat::digest()))
        } else {
            match &config.chat {
                Some(cfg) => Some(Box::new(HttpChatProvider::new(cfg.clone())?)),
                None => None,
            }
        };
        Ok(Pipeline {
            workspace: Workspace::new(&config.workspace),
            config,
            taxonomy,
            offline,
            chat,
            embed,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workspace(&self) -> &Workspace {
        &self.workspace
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn is_offline(&self) -> bool {
        self.offline
    }

    fn chat(&self, purpose: &str) -> Result<&dyn ChatProvider> {
        self.chat.as_deref().ok_or_else(|| {
            Error::Config(format!("{purpose} needs a chat model; add a [chat] section or pass --offline"))
        })
    }

    fn needs_chat_for_ingest(&self) -> bool {
        self.config.preprocess == ReconstructMode::LlmAssisted
    }

    fn needs_chat_for_classify(&self) -> bool {
        self.config.scorer == ScorerMode::Llm
    }

    /// Resolves a category by name, case-insensitively.
    pub fn category(&self, name: &str) -> Result<&Category> {
        self.taxonomy.find(name).ok_or_else(|| {
            Error::Usage(format!(
                "unknown category {name:?}; valid categories: {}",
                self.taxonomy.names().join(", ")
            ))
        })
    }

    fn read_index(&self) -> Result<Vec<Record<DocumentEntry>>> {
        let path = self.workspace.documents_index();
        if !path.exists() {
            return Ok(Vec::new());
        }
        Ok(read_records(&path)?)
    }

    fn documents(&self, kind: DocKind) -> Result<Vec<DocumentEntry>> {
        Ok(self
            .read_index()?
            .into_iter()
            .map(|r| r.value)
            .filter(|d| d.kind == kind)
            .collect())
    }

    fn load_chunks(&self, doc_id: &str) -> Result<Vec<DocumentChunk>> {
        let path = self.workspace.chunks(doc_id);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                what: "document chunks",
                command: "ingest",
            });
        }
        Ok(read_chunks(&path)?.into_iter().map(|r| r.value).collect())
    }

    fn mission_chunks(&self) -> Result<Vec<DocumentChunk>> {
        let docs = self.documents(DocKind::Mission)?;
        if docs.is_empty() {
            return Err(Error::MissingArtifact {
                what: "mission document",
                command: "ingest --kind mission",
            });
        }
        let mut chunks = Vec::new();
        for d in &docs {
            chunks.extend(self.load_chunks(&d.doc_id)?);
        }
        Ok(chunks)
    }

    fn open_cache(&self) -> Result<EmbeddingCache> {
        Ok(EmbeddingCache::open(self.workspace.embedding_cache())?)
    }

    pub fn ingest(&self, files: &[PathBuf], kind: DocKind) -> Result<IngestSummary> {
        if files.is_empty() {
            return Err(Error::Usage("ingest needs at least one file".into()));
        }
        let chat = if self.needs_chat_for_ingest() {
            Some(self.chat("llm_assisted preprocessing")?)
        } else {
            None
        };
        let mut index = self.read_index()?;
        let mut total_chunks = 0;
        for path in files {
            let raw = fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
            let doc_id = doc_id_from_path(path)?;
            let text = reconstruct_paragraphs(&raw, self.config.preprocess, chat)?;
            let doc = SourceDocument::new(&doc_id, kind, text, path.display().to_string())?;
            let chunks = chunk_document(&doc, self.config.chunk_min_chars)?;
            total_chunks += chunks.len();

            write_text(&self.workspace.reconstructed_text(&doc_id), &doc.text)?;
            let records: Vec<_> = chunks.into_iter().map(Record::new).collect();
            write_chunks(&self.workspace.chunks(&doc_id), &records)?;

            let entry = DocumentEntry {
                doc_id: doc_id.clone(),
                kind,
                origin: doc.origin.clone(),
                chunks: records.len(),
                text_sha256: crate::digest::sha256_hex(doc.text.as_bytes()),
            };
            match index.iter_mut().find(|r| r.value.doc_id == doc_id) {
                Some(existing) => existing.value = entry,
                None => index.push(Record::new(entry)),
            }
        }
        index.sort_by(|a, b| a.value.doc_id.cmp(&b.value.doc_id));
        write_records(&self.workspace.documents_index(), &index)?;
        Ok(IngestSummary {
            kind,
            documents: files.len(),
            chunks: total_chunks,
        })
    }

    pub fn classify(&self) -> Result<ClassifySummary> {
        let scorer = if self.needs_chat_for_classify() {
            Scorer::Llm(self.chat("llm classification")?)
        } else {
            Scorer::Lexical
        };
        let chunks = self.mission_chunks()?;
        let scores = score_chunks(&chunks, &self.taxonomy, scorer)?;
        let assignments: Vec<_> = scores.iter().map(assign_category).collect();
        let k = self.taxonomy.len();
        let label = if self.config.soft_labels {
            aggregate_soft_label(&scores, k, "mission")?
        } else {
            aggregate_neural_label(&assignments, k, "mission")?
        };

        let records: Vec<AssignmentRecord> = chunks
            .iter()
            .zip(scores.iter().zip(&assignments))
            .map(|(c, (s, a))| AssignmentRecord {
                chunk_id: c.chunk_id.clone(),
                doc_id: c.doc_id.clone(),
                category_id: a.category_id,
                category: self.taxonomy.categories()[a.category_id].name.clone(),
                scores: s.scores.clone(),
            })
            .collect();
        write_records(&self.workspace.mission_assignments(), &records)?;
        write_records(
            &self.workspace.mission_label(),
            &[LabelRecord {
                taxonomy_version: self.taxonomy.version().to_owned(),
                label: label.clone(),
            }],
        )?;
        Ok(ClassifySummary {
            chunks: chunks.len(),
            label,
        })
    }

    pub fn label_domain(&self) -> Result<LabelDomainSummary> {
        let entries = self.documents(DocKind::Domain)?;
        if entries.is_empty() {
            return Err(Error::MissingArtifact {
                what: "standards documents",
                command: "ingest --kind domain",
            });
        }
        let mut docs = Vec::with_capacity(entries.len());
        for e in &entries {
            let path = self.workspace.reconstructed_text(&e.doc_id);
            let text = fs::read_to_string(&path).map_err(|_| Error::MissingArtifact {
                what: "reconstructed standards text",
                command: "ingest --kind domain",
            })?;
            docs.push(SourceDocument::new(&e.doc_id, DocKind::Domain, text, e.origin.clone())?);
        }
        let mut cache = self.open_cache()?;
        let labeled = label_domain_documents(
            &docs,
            &self.taxonomy,
            self.embed.as_ref(),
            &mut cache,
            self.config.input_limit,
            self.config.label_metric,
        )?;
        cache.flush()?;
        let records: Vec<LabelRecord> = labeled
            .iter()
            .map(|d| LabelRecord {
                taxonomy_version: self.taxonomy.version().to_owned(),
                label: d.label.clone(),
            })
            .collect();
        write_records(&self.workspace.domain_index(), &records)?;
        Ok(LabelDomainSummary {
            documents: labeled.len(),
            cache_hits: cache.hits(),
            cache_misses: cache.misses(),
        })
    }

    fn read_label_file(&self, path: &Path, what: &'static str, command: &'static str) -> Result<Vec<LabelRecord>> {
        if !path.exists() {
            return Err(Error::MissingArtifact { what, command });
        }
        let records: Vec<LabelRecord> = read_records(path)?;
        if let Some(r) = records.iter().find(|r| r.taxonomy_version != self.taxonomy.version()) {
            return Err(Error::Config(format!(
                "{} was built with taxonomy {:?} but the current taxonomy is {:?}; run {command} again",
                path.display(),
                r.taxonomy_version,
                self.taxonomy.version()
            )));
        }
        Ok(records)
    }

    pub fn select(&self) -> Result<SelectSummary> {
        let mission = self
            .read_label_file(&self.workspace.mission_label(), "mission label", "classify")?
            .into_iter()
            .next()
            .ok_or(Error::MissingArtifact {
                what: "mission label",
                command: "classify",
            })?;
        let domain: Vec<LabeledDocument> = self
            .read_label_file(&self.workspace.domain_index(), "domain labels", "label-domain")?
            .into_iter()
            .map(|r| LabeledDocument {
                doc_id: r.label.subject_id.clone(),
                embedding_dim: self.embed.dimension(),
                label: r.label,
            })
            .collect();
        let selection = select_domain_docs(&mission.label, &domain, self.config.threshold, self.config.top_k)?;
        write_records(&self.workspace.selection_report(), &selection.report())?;
        Ok(SelectSummary { selection })
    }

    fn read_selection(&self) -> Result<SelectionResult> {
        let path = self.workspace.selection_report();
        if !path.exists() {
            return Err(Error::MissingArtifact {
                what: "selection report",
                command: "select",
            });
        }
        let entries: Vec<SelectionEntry> = read_records(&path)?;
        Ok(SelectionResult::from_report(&entries, self.config.threshold, self.config.top_k))
    }

    fn out_dir(&self, query: &str) -> PathBuf {
        self.workspace.output_dir(query)
    }

    pub fn retrieve(&self, query: &str, category: &str) -> Result<RetrieveSummary> {
        let category = self.category(category)?;
        let extended: ExtendedQuery = extend_query(query, category)?;
        let selection = self.read_selection()?;
        let mission = self.mission_chunks()?;
        let mut domain = BTreeMap::new();
        for id in &selection.selected_ids {
            domain.insert(id.clone(), self.load_chunks(id)?);
        }
        let corpus = build_requirements_corpus(mission, &domain, selection)?;
        let mut cache = self.open_cache()?;
        let hits = retrieve_chunks(
            &extended,
            &corpus,
            RetrievalScorer::Dense(self.embed.as_ref()),
            &mut cache,
            RetrievalBudget {
                k_mission: self.config.k_mission,
                k_domain: self.config.k_domain,
            },
        )?;
        cache.flush()?;

        let dir = self.out_dir(query);
        write_records(
            &dir.join("query.record"),
            &[QueryRecord {
                query: query.to_owned(),
                category: category.name.clone(),
                extended_query: extended.rendered.clone(),
            }],
        )?;
        let report_path = dir.join("retrieval.report");
        let report: Vec<RetrievalReportEntry> = hits.iter().map(RetrievalReportEntry::from).collect();
        write_records(&report_path, &report)?;
        Ok(RetrieveSummary {
            hits,
            report: report_path,
        })
    }

    fn read_retrieval(&self, query: &str, category: &Category) -> Result<Vec<RetrievedChunk>> {
        let dir = self.out_dir(query);
        let missing = Error::MissingArtifact {
            what: "retrieval report",
            command: "retrieve",
        };
        let query_path = dir.join("query.record");
        let report_path = dir.join("retrieval.report");
        if !query_path.exists() || !report_path.exists() {
            return Err(missing);
        }
        let recorded: Vec<QueryRecord> = read_records(&query_path)?;
        match recorded.first() {
            Some(q) if q.query == query && q.category.eq_ignore_ascii_case(&category.name) => {}
            Some(q) => {
                return Err(Error::Usage(format!(
                    "the retrieval report for this query was built for category {:?}; run retrieve with --category {:?}",
                    q.category, category.name
                )))
            }
            None => return Err(missing),
        }
        let report: Vec<RetrievalReportEntry> = read_records(&report_path)?;
        let mut by_doc: BTreeMap<String, Vec<DocumentChunk>> = BTreeMap::new();
        let mut hits = Vec::with_capacity(report.len());
        for entry in report {
            if !by_doc.contains_key(&entry.doc_id) {
                by_doc.insert(entry.doc_id.clone(), self.load_chunks(&entry.doc_id)?);
            }
            let chunk = by_doc[&entry.doc_id]
                .iter()
                .find(|c| c.chunk_id == entry.chunk_id)
                .cloned()
                .ok_or_else(|| {
                    Error::Usage(format!(
                        "chunk {} of {} is no longer in the corpus; run retrieve again",
                        entry.chunk_id, entry.doc_id
                    ))
                })?;
            hits.push(RetrievedChunk {
                chunk,
                score: entry.score,
                source: entry.source,
                rank: entry.rank,
            });
        }
        Ok(hits)
    }

    pub fn generate(
        &self,
        query: &str,
        category: &str,
        mission_name: &str,
        dump_prompt: bool,
    ) -> Result<GenerateSummary> {
        let chat = self.chat("generation")?;
        let category = self.category(category)?;
        let hits = self.read_retrieval(query, category)?;
        let (mission, domain): (Vec<_>, Vec<_>) =
            hits.into_iter().partition(|h| h.source == Source::Mission);
        let bundle = build_prompt(mission_name, category, &mission, &domain)?;
        let output = generate_answer(&bundle, chat)?;

        let dir = self.out_dir(query);
        if dump_prompt {
            write_text(&dir.join("prompt.txt"), &bundle.rendered_prompt)?;
        }
        let record = dir.join("answer.record");
        write_records(
            &record,
            &[AnswerRecord {
                query: query.to_owned(),
                category: category.name.clone(),
                mission_name: mission_name.to_owned(),
                output: output.clone(),
            }],
        )?;
        Ok(GenerateSummary { output, record })
    }

    /// Runs every stage in order, stopping at the first failure. Each
    /// summary line is passed to `progress` as soon as its stage finishes.
    pub fn run(&self, request: &PipelineRequest, mut progress: impl FnMut(&str)) -> Result<PipelineSummary> {
        self.category(&request.category)?;
        if request.mission.is_empty() {
            return Err(Error::Usage("pipeline needs at least one mission document".into()));
        }
        if request.domain.is_empty() {
            return Err(Error::Usage("pipeline needs at least one standards document".into()));
        }
        if self.needs_chat_for_ingest() {
            self.chat("llm_assisted preprocessing")?;
        }
        if self.needs_chat_for_classify() {
            self.chat("llm classification")?;
        }
        self.chat("generation")?;

        let mut lines = Vec::new();
        let mut note = |line: String, lines: &mut Vec<String>| {
            progress(&line);
            lines.push(line);
        };
        let s = self
            .ingest(&request.mission, DocKind::Mission)
            .map_err(|e| e.in_stage("ingest"))?;
        note(s.to_string(), &mut lines);
        let s = self
            .ingest(&request.domain, DocKind::Domain)
            .map_err(|e| e.in_stage("ingest"))?;
        note(s.to_string(), &mut lines);
        let s = self.classify().map_err(|e| e.in_stage("classify"))?;
        note(s.to_string(), &mut lines);
        let s = self.label_domain().map_err(|e| e.in_stage("label-domain"))?;
        note(s.to_string(), &mut lines);
        let s = self.select().map_err(|e| e.in_stage("select"))?;
        note(s.to_string(), &mut lines);
        let s = self
            .retrieve(&request.query, &request.category)
            .map_err(|e| e.in_stage("retrieve"))?;
        note(s.to_string(), &mut lines);
        let s = self
            .generate(&request.query, &request.category, &request.mission_name, request.dump_prompt)
            .map_err(|e| e.in_stage("generate"))?;
        note(s.to_string(), &mut lines);
        Ok(PipelineSummary {
            lines,
            output: s.output,
            record: s.record,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offline(dir: &Path) -> Pipeline {
        let mut config = PipelineConfig::default();
        Overrides {
            workspace: Some(dir.to_path_buf()),
            offline: true,
            ..Overrides::default()
        }
        .apply(&mut config);
        Pipeline::new(config, true).unwrap()
    }

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.chunk_min_chars, 20);
        assert_eq!(c.threshold, 0.0);
        assert_eq!(c.top_k, None);
        assert_eq!((c.k_mission, c.k_domain), (10, 20));
        assert_eq!(c.input_limit, 8000);
        assert_eq!(c.scorer, ScorerMode::Llm);
        assert_eq!(c.embed_mode, EmbedMode::Remote);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::parse("thresold = 0.5"), Err(Error::Config(_))));
    }

    #[test]
    fn non_finite_threshold_is_rejected() {
        let c = PipelineConfig { threshold: f64::NAN, ..PipelineConfig::default() };
        assert!(matches!(Pipeline::new(c, false), Err(Error::Config(_))));
    }

    #[test]
    fn remote_embedding_without_section_fails_before_any_call() {
        let err = Pipeline::new(PipelineConfig::default(), false).err().unwrap();
        assert!(err.to_string().contains("[embed]"));
    }

    #[test]
    fn missing_credential_fails_at_construction() {
        let c = PipelineConfig::parse(
            r#"
            embed_mode = "offline"
            [chat]
            endpoint = "http://127.0.0.1:9/v1/chat/completions"
            model = "m"
            credentials_ref = "REQRAG_TEST_SURELY_UNSET_VARIABLE"
            "#,
        )
        .unwrap();
        assert!(matches!(Pipeline::new(c, false), Err(Error::Provider(_))));
    }

    #[test]
    fn select_before_classify_names_the_command() {
        let dir = tempfile::tempdir().unwrap();
        let err = offline(dir.path()).select().unwrap_err();
        assert_eq!(err.to_string(), "mission label missing; run classify");
    }

    #[test]
    fn unknown_category_lists_valid_names() {
        let dir = tempfile::tempdir().unwrap();
        let err = offline(dir.path()).retrieve("q", "Warp Drive").unwrap_err().to_string();
        for name in default_taxonomy().names() {
            assert!(err.contains(name), "{err}");
        }
    }

    #[test]
    fn classify_without_chat_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let c = PipelineConfig {
            embed_mode: EmbedMode::Offline,
            workspace: dir.path().to_path_buf(),
            ..Default::default()
        };
        let p = Pipeline::new(c, false).unwrap();
        assert!(matches!(p.classify(), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_win() {
        let mut c = PipelineConfig::default();
        Overrides {
            offline: true,
            threshold: Some(0.25),
            top_k: Some(2),
            k_mission: Some(3),
            k_domain: Some(4),
            ..Overrides::default()
        }
        .apply(&mut c);
        assert_eq!(c.scorer, ScorerMode::Lexical);
        assert_eq!(c.embed_mode, EmbedMode::Offline);
        assert_eq!((c.threshold, c.top_k, c.k_mission, c.k_domain), (0.25, Some(2), 3, 4));
    }
}

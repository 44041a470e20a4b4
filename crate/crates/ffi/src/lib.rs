//! C ABI for reqrag.
//!
//! Every function returns a [`ReqragStatus`]; on failure a message is kept
//! per thread and can be read with [`reqrag_last_error`]. Taxonomies are
//! opaque handles released with [`reqrag_taxonomy_free`]. Strings handed
//! out by this library are released with [`reqrag_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::{
    cell::RefCell,
    ffi::{c_char, CStr, CString},
    panic::{catch_unwind, AssertUnwindSafe},
    path::PathBuf,
    ptr, slice,
};

use reqrag::{
    classify::{aggregate_neural_label, assign_category, ChunkAssignment, LabelVariant, NeuralLabel, ScoreVector},
    domain_label::LabeledDocument,
    generate::build_prompt,
    ingest::DocumentChunk,
    pipeline::{Overrides, Pipeline, PipelineConfig, PipelineRequest},
    providers::offline_embed,
    retrieve::{RetrievedChunk, Source},
    select::{cosine_similarity, select_domain_docs},
    taxonomy::{default_taxonomy, Taxonomy},
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReqragStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Failed = 4,
    Panic = 5,
}

/// Opaque category taxonomy.
pub struct ReqragTaxonomy {
    inner: Taxonomy,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(ReqragStatus, String);

impl Fail {
    fn null(what: &str) -> Self {
        Fail(ReqragStatus::NullArgument, format!("{what} is null"))
    }
    fn invalid(message: impl Into<String>) -> Self {
        Fail(ReqragStatus::InvalidArgument, message.into())
    }
}

impl<E: std::error::Error> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(ReqragStatus::Failed, e.to_string())
    }
}

fn guard(body: impl FnOnce() -> Result<(), Fail>) -> ReqragStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => ReqragStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ReqragStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ReqragStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn texts<'a>(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<&'a str>, Fail> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if p.is_null() {
        return Err(Fail::null(what));
    }
    slice::from_raw_parts(p, n).iter().map(|&s| text(s, what)).collect()
}

unsafe fn floats<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(Fail::null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::null(what));
    }
    out.write(value);
    Ok(())
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior NUL").into_raw()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn reqrag_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn reqrag_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The built-in seven-category taxonomy.
#[no_mangle]
pub unsafe extern "C" fn reqrag_taxonomy_default(out: *mut *mut ReqragTaxonomy) -> ReqragStatus {
    guard(|| {
        let handle = Box::into_raw(Box::new(ReqragTaxonomy {
            inner: default_taxonomy(),
        }));
        put(out, handle, "out")
    })
}

/// Loads a taxonomy from a TOML file.
#[no_mangle]
pub unsafe extern "C" fn reqrag_taxonomy_load(path: *const c_char, out: *mut *mut ReqragTaxonomy) -> ReqragStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let inner = Taxonomy::load(text(path, "path")?)?;
        put(out, Box::into_raw(Box::new(ReqragTaxonomy { inner })), "out")
    })
}

/// Number of categories, or 0 for NULL.
#[no_mangle]
pub unsafe extern "C" fn reqrag_taxonomy_len(taxonomy: *const ReqragTaxonomy) -> usize {
    taxonomy.as_ref().map_or(0, |t| t.inner.len())
}

/// Releases a taxonomy. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn reqrag_taxonomy_free(taxonomy: *mut ReqragTaxonomy) {
    if !taxonomy.is_null() {
        drop(Box::from_raw(taxonomy));
    }
}

/// Offline embedding of `text` into `out[0..dimension]`.
#[no_mangle]
pub unsafe extern "C" fn reqrag_offline_embed(text_in: *const c_char, dimension: usize, out: *mut f64) -> ReqragStatus {
    guard(|| {
        let t = text(text_in, "text")?;
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let v = offline_embed(t, dimension)?;
        slice::from_raw_parts_mut(out, dimension).copy_from_slice(v.values());
        Ok(())
    })
}

/// Cosine similarity of two vectors of length `len`.
#[no_mangle]
pub unsafe extern "C" fn reqrag_cosine(a: *const f64, b: *const f64, len: usize, out: *mut f64) -> ReqragStatus {
    guard(|| {
        let c = cosine_similarity(floats(a, len, "a")?, floats(b, len, "b")?)?;
        put(out, c, "out")
    })
}

/// Index of the highest score; ties go to the lowest index.
#[no_mangle]
pub unsafe extern "C" fn reqrag_assign_category(scores: *const f64, k: usize, out: *mut usize) -> ReqragStatus {
    guard(|| {
        let sv = ScoreVector::new("ffi", floats(scores, k, "scores")?.to_vec())?;
        put(out, assign_category(&sv).category_id, "out")
    })
}

/// Counts `n` category ids into `out[0..k]`.
#[no_mangle]
pub unsafe extern "C" fn reqrag_aggregate_counts(
    categories: *const usize,
    n: usize,
    k: usize,
    out: *mut f64,
) -> ReqragStatus {
    guard(|| {
        if categories.is_null() {
            return Err(Fail::null("categories"));
        }
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let assignments: Vec<ChunkAssignment> = slice::from_raw_parts(categories, n)
            .iter()
            .enumerate()
            .map(|(i, &c)| ChunkAssignment {
                chunk_id: i.to_string(),
                category_id: c,
                score: 0.0,
            })
            .collect();
        let label = aggregate_neural_label(&assignments, k, "ffi")?;
        slice::from_raw_parts_mut(out, k).copy_from_slice(&label.values);
        Ok(())
    })
}

/// Selects standards whose label has cosine strictly above `threshold` with
/// the mission counts. `domain` holds `n` labels of length `k`, row-major.
/// Selected row indices are written to `out_indices` in rank order (at most
/// `n` of them) and their number to `out_count`. A negative `top_k` means
/// no limit.
#[no_mangle]
pub unsafe extern "C" fn reqrag_select(
    mission: *const f64,
    k: usize,
    domain: *const f64,
    n: usize,
    threshold: f64,
    top_k: isize,
    out_indices: *mut usize,
    out_count: *mut usize,
) -> ReqragStatus {
    guard(|| {
        let mission = NeuralLabel::new("mission", LabelVariant::Counts, floats(mission, k, "mission")?.to_vec())?;
        let rows = if n == 0 { &[][..] } else { floats(domain, n * k, "domain")? };
        if n > 0 && out_indices.is_null() {
            return Err(Fail::null("out_indices"));
        }
        let docs = rows
            .chunks(k.max(1))
            .enumerate()
            .map(|(i, row)| {
                Ok(LabeledDocument {
                    doc_id: format!("{i:020}"),
                    label: NeuralLabel::new(format!("{i}"), LabelVariant::Similarities, row.to_vec())?,
                    embedding_dim: k,
                })
            })
            .collect::<Result<Vec<_>, Fail>>()?;
        let top_k = usize::try_from(top_k).ok();
        let selection = select_domain_docs(&mission, &docs, threshold, top_k)?;
        for (slot, id) in selection.selected_ids.iter().enumerate() {
            *out_indices.add(slot) = id.parse().expect("numeric id");
        }
        put(out_count, selection.selected_ids.len(), "out_count")
    })
}

fn hits(texts: &[&str], doc_id: &str, source: Source) -> Vec<RetrievedChunk> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| RetrievedChunk {
            chunk: DocumentChunk::new(doc_id, i, (*t).to_owned(), (0, t.chars().count())),
            score: 0.0,
            source,
            rank: i + 1,
        })
        .collect()
}

/// Renders the answer-generation prompt. Chunk `i` of each list gets the id
/// of ordinal `i` in a document named `mission` or `domain`. The prompt is
/// returned in `out` and must be released with `reqrag_string_free`.
#[no_mangle]
pub unsafe extern "C" fn reqrag_build_prompt(
    taxonomy: *const ReqragTaxonomy,
    mission_name: *const c_char,
    category: *const c_char,
    mission_texts: *const *const c_char,
    n_mission: usize,
    domain_texts: *const *const c_char,
    n_domain: usize,
    out: *mut *mut c_char,
) -> ReqragStatus {
    guard(|| {
        let taxonomy = &taxonomy.as_ref().ok_or_else(|| Fail::null("taxonomy"))?.inner;
        let name = text(category, "category")?;
        let scenario = taxonomy
            .find(name)
            .ok_or_else(|| Fail::invalid(format!("unknown category {name:?}; valid: {}", taxonomy.names().join(", "))))?;
        let mission = hits(&texts(mission_texts, n_mission, "mission_texts")?, "mission", Source::Mission);
        let domain = hits(&texts(domain_texts, n_domain, "domain_texts")?, "domain", Source::Domain);
        if out.is_null() {
            return Err(Fail::null("out"));
        }
        let bundle = build_prompt(text(mission_name, "mission_name")?, scenario, &mission, &domain)?;
        put(out, owned_string(bundle.rendered_prompt), "out")
    })
}

/// Runs every stage. `config_path` may be NULL for defaults; `offline`
/// non-zero selects offline providers. The path of the answer record is
/// returned in `out_record`.
#[no_mangle]
pub unsafe extern "C" fn reqrag_pipeline_run(
    config_path: *const c_char,
    workspace: *const c_char,
    offline: i32,
    mission_paths: *const *const c_char,
    n_mission: usize,
    domain_paths: *const *const c_char,
    n_domain: usize,
    query: *const c_char,
    category: *const c_char,
    mission_name: *const c_char,
    out_record: *mut *mut c_char,
) -> ReqragStatus {
    guard(|| {
        if out_record.is_null() {
            return Err(Fail::null("out_record"));
        }
        let mut config = if config_path.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::load(text(config_path, "config_path")?.as_ref())?
        };
        let offline = offline != 0;
        Overrides {
            workspace: Some(PathBuf::from(text(workspace, "workspace")?)),
            offline,
            ..Overrides::default()
        }
        .apply(&mut config);
        let pipeline = Pipeline::new(config, offline)?;
        let request = PipelineRequest {
            mission: texts(mission_paths, n_mission, "mission_paths")?.into_iter().map(PathBuf::from).collect(),
            domain: texts(domain_paths, n_domain, "domain_paths")?.into_iter().map(PathBuf::from).collect(),
            query: text(query, "query")?.to_owned(),
            category: text(category, "category")?.to_owned(),
            mission_name: text(mission_name, "mission_name")?.to_owned(),
            dump_prompt: false,
        };
        let summary = pipeline.run(&request, |_| {})?;
        put(out_record, owned_string(summary.record.display().to_string()), "out_record")
    })
}

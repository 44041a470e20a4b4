//! Answer-generation prompt assembly and traceable generation.
//!
//! The template in `templates/answer_generation.txt` is used verbatim. Only
//! its four placeholders are substituted, in a single pass, so text inside a
//! chunk that happens to look like a placeholder is never expanded.
//! Retrieved chunks are rendered one per line as `- [<8 hex>] <text>`; the
//! bracketed id prefix lets a drafted requirement cite its source.

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{
    digest,
    providers::{chat_complete, ChatProvider, ProviderError},
    retrieve::RetrievedChunk,
    taxonomy::Category,
};

pub const ANSWER_TEMPLATE: &str = include_str!("../templates/answer_generation.txt");

const MISSION: &str = "{MISSION}";
const SCENARIO: &str = "{INPUT SCENARIO}";
const REQUIREMENTS: &str = "{INPUT REQUIREMENTS}";
const STANDARDS: &str = "{INPUT DOMAIN STANDARDS}";

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("mission name is empty")]
    EmptyMissionName,
    #[error("no retrieved chunks to put in the prompt")]
    NoHits,
    #[error("generation failed: {0}")]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub mission_name: String,
    pub scenario_text: String,
    pub requirements_block: String,
    pub standards_block: String,
    pub rendered_prompt: String,
    pub prompt_hash: String,
    /// Full ids of every chunk rendered into the blocks, in order.
    pub chunk_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedOutput {
    pub answer: String,
    pub trace: Vec<String>,
    pub prompt_hash: String,
    pub provider_model: String,
    pub created_at: String,
}

fn render_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|v| v.1.len()).sum::<usize>());
    let mut rest = template;
    'scan: while !rest.is_empty() {
        if rest.starts_with('{') {
            for (token, value) in values {
                if let Some(tail) = rest.strip_prefix(token) {
                    out.push_str(value);
                    rest = tail;
                    continue 'scan;
                }
            }
        }
        let c = rest.chars().next().expect("non-empty");
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn render_block(hits: &[RetrievedChunk]) -> String {
    hits.iter()
        .map(|h| {
            let text = h.chunk.text.split_whitespace().collect::<Vec<_>>().join(" ");
            format!("- [{}] {}", h.chunk.short_id(), text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_prompt(
    mission_name: &str,
    scenario: &Category,
    mission_hits: &[RetrievedChunk],
    domain_hits: &[RetrievedChunk],
) -> Result<PromptBundle, GenerateError> {
    if mission_name.trim().is_empty() {
        return Err(GenerateError::EmptyMissionName);
    }
    if mission_hits.is_empty() && domain_hits.is_empty() {
        return Err(GenerateError::NoHits);
    }
    let scenario_text = format!("{}: {}", scenario.name, scenario.description);
    let requirements_block = render_block(mission_hits);
    let standards_block = render_block(domain_hits);
    let rendered_prompt = render_template(
        ANSWER_TEMPLATE,
        &[
            (MISSION, mission_name),
            (SCENARIO, &scenario_text),
            (REQUIREMENTS, &requirements_block),
            (STANDARDS, &standards_block),
        ],
    );
    let mut chunk_ids: Vec<String> = Vec::new();
    for h in mission_hits.iter().chain(domain_hits) {
        if !chunk_ids.contains(&h.chunk.chunk_id) {
            chunk_ids.push(h.chunk.chunk_id.clone());
        }
    }
    Ok(PromptBundle {
        mission_name: mission_name.to_owned(),
        scenario_text,
        requirements_block,
        standards_block,
        prompt_hash: digest::sha256_hex(rendered_prompt.as_bytes()),
        rendered_prompt,
        chunk_ids,
    })
}

pub fn generate_answer(
    bundle: &PromptBundle,
    chat: &dyn ChatProvider,
) -> Result<GeneratedOutput, GenerateError> {
    let answer = chat_complete(chat, &bundle.rendered_prompt)?;
    Ok(GeneratedOutput {
        answer,
        trace: bundle.chunk_ids.clone(),
        prompt_hash: bundle.prompt_hash.clone(),
        provider_model: chat.model_name().to_owned(),
        created_at: Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true),
    })
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use reqrag::{
    generate::{build_prompt, PromptBundle},
    ingest::DocumentChunk,
    retrieve::{RetrievedChunk, Source},
    taxonomy::default_taxonomy,
};

pub const GOLDEN_PROMPT: &str = include_str!("../fixtures/golden_prompt.txt");

/// SHA-256 of the answer template, computed outside this code base.
pub const TEMPLATE_SHA256: &str = "872d755e7d20d643a204360128bf417be792de86a179f59a26d9953eaeca7017";

/// Chunk ids of the frozen fixture, computed outside this code base.
pub const GOLDEN_CHUNK_IDS: [&str; 5] = [
    "86405d468533ab4b30921a64c47c7b07c1e219a78e9020b33ed2d9166e0dea67",
    "159bdc25e5102425ba830ba3d18e979eb832c5fdb2299c67f34bdc797d18d50c",
    "3798c07eae8cc1d5e1ecb622c2bf8c9a8e21d0d2c58b926ed0deab80bde06f8d",
    "ed444f86c3134c1c3689f76d7a57059a1c74e0df9bd6d145bdc6e3202663f437",
    "81c0985e740220d76176762d7707185ec341a4962f70bf7529e50197a09ab5ef",
];

fn hit(doc: &str, ordinal: usize, text: &str, source: Source, rank: usize) -> RetrievedChunk {
    RetrievedChunk {
        chunk: DocumentChunk::new(doc, ordinal, text.to_owned(), (0, text.chars().count())),
        score: 1.0 / rank as f64,
        source,
        rank,
    }
}

pub fn golden_bundle() -> PromptBundle {
    let mission = [
        hit("aurora3-guide", 4, "Each payload shall have a total mass not exceeding 180 kg including its separation system half.", Source::Mission, 1),
        hit("aurora3-guide", 9, "Each port accepts a 15 inch or 24 inch clamp band separation system.\nThe separation system is supplied by the customer.", Source::Mission, 2),
        hit("aurora3-guide", 12, "Shock at the separation interface shall not exceed 2000 g; the text {MISSION} stays literal.", Source::Mission, 3),
    ];
    let domain = [
        hit("lv-interface-std", 2, "The spacecraft shall withstand the quasi-static, sine, random, acoustic and shock environments.", Source::Domain, 1),
        hit("lv-interface-std", 4, "Separation systems shall provide tip-off rates below 2 degrees per second about any axis.", Source::Domain, 2),
    ];
    let taxonomy = default_taxonomy();
    let scenario = taxonomy.find("Launch Vehicle").expect("built-in category");
    build_prompt("Aurora-3 Rideshare", scenario, &mission, &domain).expect("fixture is valid")
}

pub fn samples_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../samples")
}

pub fn sample_mission() -> PathBuf {
    samples_dir().join("mission_aurora3_rideshare_guide.txt")
}

pub fn sample_domain() -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(samples_dir().join("domain"))
        .expect("samples/domain exists")
        .map(|e| e.expect("readable entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    files
}

use thiserror::Error;

use crate::{
    classify::ClassifyError, domain_label::LabelError, generate::GenerateError,
    ingest::IngestError, providers::ProviderError, retrieve::RetrieveError,
    select::SelectError, store::StoreError, taxonomy::TaxonomyError,
};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error; each stage has its own enum that converts into this.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Retrieve(#[from] RetrieveError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{what} missing; run {command}")]
    MissingArtifact {
        what: &'static str,
        command: &'static str,
    },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

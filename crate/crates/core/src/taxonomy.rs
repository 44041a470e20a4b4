//! Application-scenario categories.
//!
//! Every neural label, score vector and category embedding in a run is
//! index-aligned with one [`Taxonomy`]. Ids are positional: the `id` field in
//! a taxonomy file is optional, and when present must equal the entry's
//! position.
//!
//! File format (TOML):
//!
//! ```toml
//! version = "space-7/v1"
//!
//! [[category]]
//! id = 0                       # optional, must match position
//! name = "Payload"
//! description = "The mission-specific instruments ..."
//! ```
//!
//! Unknown keys are rejected.

use std::{fs, path::Path};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read taxonomy file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy does not parse: {0}")]
    Parse(String),
    #[error("category #{position}: id {id} does not match its position (ids are positional)")]
    IdMismatch { position: usize, id: usize },
    #[error("category #{position} ({name:?}): name is empty")]
    EmptyName { position: usize, name: String },
    #[error("category #{position} ({name:?}): description is empty")]
    EmptyDescription { position: usize, name: String },
    #[error("taxonomy needs at least 2 categories, got {0}")]
    TooFew(usize),
    #[error("taxonomy version tag is empty")]
    EmptyVersion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: usize,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    version: String,
    categories: Vec<Category>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyFile {
    version: String,
    #[serde(default, rename = "category")]
    categories: Vec<CategoryEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<usize>,
    name: String,
    description: String,
}

impl Taxonomy {
    /// Builds a taxonomy from `(name, description)` pairs; ids follow order.
    pub fn new<N, D>(
        version: impl Into<String>,
        entries: impl IntoIterator<Item = (N, D)>,
    ) -> Result<Self, TaxonomyError>
    where
        N: Into<String>,
        D: Into<String>,
    {
        let categories = entries
            .into_iter()
            .enumerate()
            .map(|(id, (name, description))| Category {
                id,
                name: name.into(),
                description: description.into(),
            })
            .collect();
        let taxonomy = Taxonomy {
            version: version.into(),
            categories,
        };
        taxonomy.validate()?;
        Ok(taxonomy)
    }

    pub fn parse(source: &str) -> Result<Self, TaxonomyError> {
        let file: TaxonomyFile =
            toml::from_str(source).map_err(|e| TaxonomyError::Parse(e.to_string()))?;
        for (position, entry) in file.categories.iter().enumerate() {
            if let Some(id) = entry.id {
                if id != position {
                    return Err(TaxonomyError::IdMismatch { position, id });
                }
            }
        }
        Taxonomy::new(
            file.version,
            file.categories.into_iter().map(|c| (c.name, c.description)),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let source = fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&source)
    }

    /// Serializes to the taxonomy file format, with explicit ids.
    pub fn to_toml(&self) -> String {
        let file = TaxonomyFile {
            version: self.version.clone(),
            categories: self
                .categories
                .iter()
                .map(|c| CategoryEntry {
                    id: Some(c.id),
                    name: c.name.clone(),
                    description: c.description.clone(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("taxonomy serializes")
    }

    fn validate(&self) -> Result<(), TaxonomyError> {
        if self.version.trim().is_empty() {
            return Err(TaxonomyError::EmptyVersion);
        }
        if self.categories.len() < 2 {
            return Err(TaxonomyError::TooFew(self.categories.len()));
        }
        for (position, c) in self.categories.iter().enumerate() {
            debug_assert_eq!(c.id, position);
            if c.name.trim().is_empty() {
                return Err(TaxonomyError::EmptyName {
                    position,
                    name: c.name.clone(),
                });
            }
            if c.description.trim().is_empty() {
                return Err(TaxonomyError::EmptyDescription {
                    position,
                    name: c.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    /// Number of categories, `K`.
    pub fn len(&self) -> usize {
        self.categories.len()
    }

    /// Always false for a validated taxonomy.
    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Category> {
        self.categories.get(id)
    }

    /// Case-insensitive lookup by name.
    pub fn find(&self, name: &str) -> Option<&Category> {
        let name = name.trim();
        self.categories
            .iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn names(&self) -> Vec<&str> {
        self.categories.iter().map(|c| c.name.as_str()).collect()
    }
}

pub const DEFAULT_VERSION: &str = "space-7/v1";

/// Built-in seven-scenario space taxonomy.
///
/// Only the opening sentences of the Payload and Launch Vehicle descriptions
/// come from the reference case; the other five descriptions are ours and
/// are non-normative.
pub fn default_taxonomy() -> Taxonomy {
    Taxonomy::new(
        DEFAULT_VERSION,
        [
            (
                "Payload",
                "The mission-specific instruments onboard the spacecraft directly achieve its \
                 primary objectives. Covers payload design constraints, materials, mass, \
                 structural stiffness, natural frequency, vibration and shock loads, \
                 contamination, pressure vessels, propulsion and hazardous systems.",
            ),
            (
                "Platform",
                "The spacecraft bus that hosts and supports the payload: structure, power, \
                 thermal control, attitude control, propulsion, communications hardware and \
                 mechanical and electrical interfaces.",
            ),
            (
                "Launch Vehicle",
                "The rocket or launch system that delivers the spacecraft into its intended \
                 orbit. Covers launcher interfaces, adapters, separation systems, coordinate \
                 frames, launch environments, integration and launch site operations.",
            ),
            (
                "Orbit-Related Aspects",
                "The orbit the spacecraft is placed in and operates from: altitude, \
                 inclination, insertion accuracy, orbital lifetime, deorbit and disposal, \
                 collision avoidance and space debris mitigation.",
            ),
            (
                "On-Board Data Handling",
                "Onboard computing, storage and data management: command and telemetry \
                 processing, data buses, flight software, timing and data downlink.",
            ),
            (
                "Reference Operation Scenarios / Observation Characteristics",
                "The sequence of mission phases and operations the spacecraft performs and \
                 the characteristics of its observations: modes, timelines, coverage, \
                 revisit, pointing and measurement conditions.",
            ),
            (
                "Operability / Autonomy Requirements",
                "The ability of the spacecraft to be operated and to act on its own: ground \
                 control, failure detection, isolation and recovery, safe modes, onboard \
                 autonomy levels and operator interaction.",
            ),
        ],
    )
    .expect("built-in taxonomy is valid")
}

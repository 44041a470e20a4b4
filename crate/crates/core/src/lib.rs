//! Requirements drafting pipeline for subcontractors.
//!
//! The stages, in order:
//!
//! 1. [`ingest`] rebuilds paragraphs from extracted text and cuts them into
//!    content-addressed chunks.
//! 2. [`classify`] scores every mission chunk against the [`taxonomy`] and
//!    counts argmax assignments into the mission's neural label.
//! 3. [`domain_label`] embeds standards documents and category descriptions
//!    and takes dot products to get each document's neural label.
//! 4. [`select`] keeps the standards whose label is cosine-similar to the
//!    mission label.
//! 5. [`retrieve`] extends a query with its scenario description and ranks
//!    mission and standards chunks separately.
//! 6. [`generate`] fills the answer-generation template and calls a chat
//!    model, keeping trace links to every chunk placed in the prompt.
//!
//! [`providers`] abstracts chat and embedding backends and ships offline
//! implementations; [`store`] persists every stage artifact as line-oriented
//! JSON; [`pipeline`] wires the stages to a workspace directory.

pub mod classify;
pub mod digest;
pub mod domain_label;
pub mod error;
pub mod generate;
pub mod ingest;
pub mod lexical;
pub mod pipeline;

pub mod providers;
pub mod retrieve;
pub mod select;
pub mod store;
pub mod taxonomy;

mod par;

pub use error::{Error, Result};

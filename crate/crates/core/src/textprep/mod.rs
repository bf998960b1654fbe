//! Item text views, the synopsis provider interface, and per-modality
//! embedding tables.

mod canonical;
mod embedding;
mod synopsis;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{canonical_text_na, load_item_metadata, parse_item_metadata, MetadataFormat};
pub use embedding::{l2_normalize, load_embedding_table, parse_embedding_table, EmbeddingTable};
pub use synopsis::{
    augment_synopsis, augment_with_fallback, build_synopsis_prompt, PromptPair, StubProvider,
    SynopsisProvider, TranscriptLog, TranscriptRecord,
};

#[derive(Debug, Error)]
pub enum TextPrepError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("item {item_id}: column {column} is not a number ({value:?})")]
    NonNumeric {
        item_id: String,
        column: usize,
        value: String,
    },
    #[error("item {item_id}: expected {expected} values, found {found}")]
    DimensionMismatch {
        item_id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate item id {0}")]
    DuplicateKey(String),
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("item {item_id}: title must not be empty")]
    EmptyTitle { item_id: String },
    #[error("provider {provider} failed for item {item_id}: {message}")]
    Provider {
        provider: String,
        item_id: String,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, TextPrepError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Audio,
    Visual,
    Text,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Title, genres and tags of one catalog item. Lists keep source order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemMetadata {
    pub item_id: String,
    pub title: String,
    pub genres: Vec<String>,
    pub tags: Vec<String>,
}

impl ItemMetadata {
    pub fn new(
        item_id: impl Into<String>,
        title: impl Into<String>,
        genres: Vec<String>,
        tags: Vec<String>,
    ) -> Result<Self> {
        let item_id = item_id.into();
        let title = title.into();
        if title.trim().is_empty() {
            return Err(TextPrepError::EmptyTitle { item_id });
        }
        Ok(Self {
            item_id,
            title,
            genres,
            tags,
        })
    }

    /// Splits a `'|'`-delimited source field, dropping empty entries.
    pub fn split_field(source: &str) -> Vec<String> {
        source
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextMode {
    /// Concatenated metadata, no augmentation.
    #[serde(rename = "NA")]
    Na,
    /// Provider-generated synopsis.
    #[serde(rename = "A")]
    A,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Prompt {
        provider: String,
        system: String,
        user: String,
    },
    /// The provider failed and the NA view was substituted.
    Fallback { provider: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalText {
    pub item_id: String,
    pub mode: TextMode,
    pub text: String,
    pub provenance: Option<Provenance>,
}

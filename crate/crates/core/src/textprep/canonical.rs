use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CanonicalText, ItemMetadata, Result, TextMode, TextPrepError};

/// Structural delimiters stripped from the NA view, besides whitespace runs.
const DELIMITERS: [&str; 3] = ["::", "|", "\t"];

fn clean(segment: &str) -> String {
    let mut s = segment.to_lowercase();
    for d in DELIMITERS {
        s = s.replace(d, " ");
    }
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds the lower-cased `title genres tags` view of an item. Empty
/// segments are omitted rather than leaving double spaces.
pub fn canonical_text_na(meta: &ItemMetadata) -> CanonicalText {
    let segments = [
        clean(&meta.title),
        clean(&meta.genres.join(" ")),
        clean(&meta.tags.join(" ")),
    ];
    let text = segments
        .iter()
        .filter(|s| !s.is_empty())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ");
    CanonicalText {
        item_id: meta.item_id.clone(),
        mode: TextMode::Na,
        text,
        provenance: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataFormat {
    /// `item_id<TAB>title<TAB>genres(|)<TAB>tags(|)`; the tags column is optional.
    Tsv,
    /// MovieLens `movies.dat`: `item_id::title::genres(|)`.
    Movielens,
}

pub fn load_item_metadata(path: impl AsRef<Path>, format: MetadataFormat) -> Result<Vec<ItemMetadata>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TextPrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_item_metadata(&String::from_utf8_lossy(&bytes), format)
}

pub fn parse_item_metadata(text: &str, format: MetadataFormat) -> Result<Vec<ItemMetadata>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = match format {
            MetadataFormat::Tsv => line.split('\t').collect(),
            MetadataFormat::Movielens => line.splitn(3, "::").collect(),
        };
        let (min, max) = match format {
            MetadataFormat::Tsv => (3, 4),
            MetadataFormat::Movielens => (3, 3),
        };
        if fields.len() < min || fields.len() > max {
            return Err(TextPrepError::Parse {
                line: n + 1,
                message: format!("expected {min}..={max} fields, found {}", fields.len()),
            });
        }
        let tags = fields.get(3).map(|t| ItemMetadata::split_field(t)).unwrap_or_default();
        out.push(ItemMetadata::new(
            fields[0].trim(),
            fields[1].trim(),
            ItemMetadata::split_field(fields[2]),
            tags,
        )?);
    }
    Ok(out)
}

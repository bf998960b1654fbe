use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Modality, Result, TextPrepError};

/// Item id to fixed-width vector map for one modality variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub modality: Modality,
    /// Source label such as `blf`, `cnn` or a text encoder name.
    pub variant: String,
    pub dim: usize,
    pub rows: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(modality: Modality, variant: impl Into<String>, dim: usize) -> Self {
        Self {
            modality,
            variant: variant.into(),
            dim,
            rows: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, item_id: impl Into<String>, row: Vec<f64>) -> Result<()> {
        let item_id = item_id.into();
        if row.len() != self.dim {
            return Err(TextPrepError::DimensionMismatch {
                item_id,
                expected: self.dim,
                found: row.len(),
            });
        }
        if self.rows.contains_key(&item_id) {
            return Err(TextPrepError::DuplicateKey(item_id));
        }
        self.rows.insert(item_id, row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, item_id: &str) -> Option<&[f64]> {
        self.rows.get(item_id).map(Vec::as_slice)
    }
}

pub fn load_embedding_table(
    path: impl AsRef<Path>,
    modality: Modality,
    variant: &str,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| TextPrepError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embedding_table(&String::from_utf8_lossy(&bytes), modality, variant)
}

/// Parses `item_id<TAB>v1<TAB>...<TAB>vd` rows. The width of the first row
/// fixes `dim`.
pub fn parse_embedding_table(text: &str, modality: Modality, variant: &str) -> Result<EmbeddingTable> {
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let item_id = fields.next().unwrap_or_default().trim().to_owned();
        let row = fields
            .enumerate()
            .map(|(c, v)| match v.trim().parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(TextPrepError::NonNumeric {
                    item_id: item_id.clone(),
                    column: c + 1,
                    value: v.to_owned(),
                }),
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.is_empty() {
            return Err(TextPrepError::Parse {
                line: n + 1,
                message: format!("item {item_id} has no values"),
            });
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(modality, variant, row.len()));
        t.insert(item_id, row)?;
    }
    table.ok_or(TextPrepError::EmptyTable)
}

/// Scales every non-zero row to unit Euclidean norm. Zero rows stay zero and
/// their ids are returned as warnings.
pub fn l2_normalize(table: &EmbeddingTable) -> (EmbeddingTable, Vec<String>) {
    let mut out = table.clone();
    let mut zero = Vec::new();
    for (id, row) in out.rows.iter_mut() {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            zero.push(id.clone());
        } else {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
    (out, zero)
}

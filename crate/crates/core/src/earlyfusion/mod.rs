//! Modality alignment and the deterministic early-fusion operators.

mod cca;
mod pca;
mod projection;

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::compare_ids;
use crate::textprep::{EmbeddingTable, Modality};

pub use cca::{cca_fit, fit_apply_cca, CcaFit, CcaSplit, CCA_RIDGE};
pub use pca::fit_apply_pca;
pub use projection::{FusionProjection, FusionRecord, ProjectionKind};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("no input tables")]
    NoTables,
    #[error("table {0} is empty")]
    EmptyTable(String),
    #[error("input tables share no item ids")]
    NoCommonItems,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed fusion record: {0}")]
    Record(String),
}

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub modality: Modality,
    pub variant: String,
    /// Rows follow [`AlignedFeatures::item_ids`].
    pub matrix: DMatrix<f64>,
}

/// Per-modality matrices restricted to the items every table shares.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedFeatures {
    /// Shared item ids in natural id order.
    pub item_ids: Vec<String>,
    pub blocks: Vec<FeatureBlock>,
    /// Number of ids each input table lost to the intersection.
    pub dropped: Vec<usize>,
}

impl AlignedFeatures {
    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.matrix.ncols()).collect()
    }

    /// Blocks in audio, visual, text order when exactly those three are
    /// present; otherwise in aligned order.
    fn concat_order(&self) -> Vec<usize> {
        let mods: BTreeSet<Modality> = self.blocks.iter().map(|b| b.modality).collect();
        let mut order: Vec<usize> = (0..self.blocks.len()).collect();
        if self.blocks.len() == 3 && mods.len() == 3 {
            order.sort_by_key(|&b| self.blocks[b].modality);
        }
        order
    }

    /// Horizontal concatenation of all blocks plus the modality of each
    /// resulting column.
    pub fn concatenated(&self) -> (DMatrix<f64>, Vec<Modality>) {
        let order = self.concat_order();
        let d: usize = self.block_dims().iter().sum();
        let mut out = DMatrix::zeros(self.n_items(), d);
        let mut mods = Vec::with_capacity(d);
        let mut off = 0;
        for b in order {
            let m = &self.blocks[b].matrix;
            out.view_mut((0, off), (m.nrows(), m.ncols())).copy_from(m);
            mods.extend(std::iter::repeat_n(self.blocks[b].modality, m.ncols()));
            off += m.ncols();
        }
        (out, mods)
    }
}

/// Intersects the tables' item keys and lays every table out in the same
/// row order.
pub fn align(tables: &[EmbeddingTable]) -> Result<AlignedFeatures> {
    if tables.is_empty() {
        return Err(FusionError::NoTables);
    }
    for t in tables {
        if t.is_empty() {
            return Err(FusionError::EmptyTable(format!("{}:{}", t.modality, t.variant)));
        }
    }
    let mut ids: Vec<String> = tables[0]
        .rows
        .keys()
        .filter(|id| tables[1..].iter().all(|t| t.rows.contains_key(*id)))
        .cloned()
        .collect();
    if ids.is_empty() {
        return Err(FusionError::NoCommonItems);
    }
    ids.sort_by(|a, b| compare_ids(a, b));
    let blocks = tables
        .iter()
        .map(|t| FeatureBlock {
            modality: t.modality,
            variant: t.variant.clone(),
            matrix: DMatrix::from_fn(ids.len(), t.dim, |r, c| t.rows[&ids[r]][c]),
        })
        .collect();
    let dropped = tables.iter().map(|t| t.len() - ids.len()).collect();
    Ok(AlignedFeatures {
        item_ids: ids,
        blocks,
        dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operator", rename_all = "snake_case")]
pub enum FusionOperator {
    Concat,
    Pca { rho: f64 },
    Cca { k: usize },
}

impl FusionOperator {
    pub fn label(&self) -> String {
        match self {
            FusionOperator::Concat => "concat".into(),
            FusionOperator::Pca { rho } => format!("pca_{rho}"),
            FusionOperator::Cca { k } => format!("cca_{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStage {
    /// Operator applied to the concatenation of all modalities.
    Early,
    /// Operator applied per modality, outputs concatenated.
    Mid,
}

/// Item-indexed fused matrix with the fitted projections that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeatures {
    pub item_ids: Vec<String>,
    pub matrix: DMatrix<f64>,
    pub operator: FusionOperator,
    pub stage: FusionStage,
    /// Empty for concat, one entry for early pca/cca, one per block for mid.
    pub projections: Vec<FusionProjection>,
}

impl FusedFeatures {
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.matrix.row(r).iter().copied().collect()
    }
}

pub fn fuse_concat(aligned: &AlignedFeatures) -> Result<FusedFeatures> {
    if aligned.n_items() == 0 || aligned.blocks.is_empty() {
        return Err(FusionError::InsufficientData("aligned features are empty".into()));
    }
    let (matrix, _) = aligned.concatenated();
    Ok(FusedFeatures {
        item_ids: aligned.item_ids.clone(),
        matrix,
        operator: FusionOperator::Concat,
        stage: FusionStage::Early,
        projections: Vec::new(),
    })
}

/// Applies `operator` either to the full concatenation (early) or to each
/// modality block separately before concatenating (mid).
pub fn fuse(
    aligned: &AlignedFeatures,
    operator: FusionOperator,
    stage: FusionStage,
    split: CcaSplit,
) -> Result<FusedFeatures> {
    match (stage, operator) {
        (_, FusionOperator::Concat) => fuse_concat(aligned),
        (FusionStage::Early, FusionOperator::Pca { rho }) => fit_apply_pca(aligned, rho),
        (FusionStage::Early, FusionOperator::Cca { k }) => fit_apply_cca(aligned, k, split),
        (FusionStage::Mid, op) => fuse_mid(aligned, op),
    }
}

fn fuse_mid(aligned: &AlignedFeatures, operator: FusionOperator) -> Result<FusedFeatures> {
    let mut parts = Vec::new();
    let mut projections = Vec::new();
    let mut offset = 0;
    for b in aligned.concat_order() {
        let block = &aligned.blocks[b];
        let single = AlignedFeatures {
            item_ids: aligned.item_ids.clone(),
            blocks: vec![block.clone()],
            dropped: vec![0],
        };
        let fused = match operator {
            FusionOperator::Pca { rho } => fit_apply_pca(&single, rho)?,
            FusionOperator::Cca { k } => fit_apply_cca(&single, k, CcaSplit::Halves)?,
            FusionOperator::Concat => unreachable!("concat has no mid variant"),
        };
        for mut p in fused.projections {
            p.columns.iter_mut().for_each(|c| *c += offset);
            p.input_dim = aligned.block_dims().iter().sum();
            projections.push(p);
        }
        offset += block.matrix.ncols();
        parts.push(fused.matrix);
    }
    let d: usize = parts.iter().map(|m| m.ncols()).sum();
    let mut matrix = DMatrix::zeros(aligned.n_items(), d);
    let mut off = 0;
    for m in &parts {
        matrix.view_mut((0, off), (m.nrows(), m.ncols())).copy_from(m);
        off += m.ncols();
    }
    Ok(FusedFeatures {
        item_ids: aligned.item_ids.clone(),
        matrix,
        operator,
        stage: FusionStage::Mid,
        projections,
    })
}

/// Symmetric eigendecomposition with eigenpairs sorted by descending
/// eigenvalue and each eigenvector sign-fixed so its largest-magnitude
/// coefficient is positive.
pub(crate) fn sorted_symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    fix_signs(&mut vectors);
    (values, vectors)
}

/// Flips each column so that its largest-magnitude entry is positive
/// (first such entry on ties). Returns the flip applied per column.
pub(crate) fn fix_signs(m: &mut DMatrix<f64>) -> Vec<f64> {
    let mut flips = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for v in m.column(j).iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            m.column_mut(j).neg_mut();
        }
        flips.push(sign);
    }
    flips
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::parse_embedding_table;

    fn table(m: Modality, text: &str) -> EmbeddingTable {
        parse_embedding_table(text, m, "v").unwrap()
    }

    #[test]
    fn align_intersects_and_sorts() {
        let a = table(Modality::Audio, "c\t1\na\t2\nb\t3\n");
        let v = table(Modality::Visual, "d\t1\t1\nc\t2\t2\nb\t3\t3\n");
        let al = align(&[a, v]).unwrap();
        assert_eq!(al.item_ids, vec!["b", "c"]);
        assert_eq!(al.dropped, vec![1, 1]);
        assert_eq!(al.blocks[0].matrix[(0, 0)], 3.0);
        assert_eq!(al.blocks[1].matrix[(1, 1)], 2.0);
    }

    #[test]
    fn align_single_table_is_identity() {
        let a = table(Modality::Audio, "2\t1\n10\t2\n1\t3\n");
        let al = align(std::slice::from_ref(&a)).unwrap();
        assert_eq!(al.item_ids, vec!["1", "2", "10"]);
        assert_eq!(al.dropped, vec![0]);
    }

    #[test]
    fn align_disjoint_fails() {
        let a = table(Modality::Audio, "a\t1\n");
        let b = table(Modality::Text, "b\t1\n");
        assert!(matches!(align(&[a, b]), Err(FusionError::NoCommonItems)));
        assert!(matches!(align(&[]), Err(FusionError::NoTables)));
    }

    #[test]
    fn concat_two_blocks() {
        let a = table(Modality::Text, "x\t1\t2\n");
        let b = table(Modality::Visual, "x\t3\t4\t5\n");
        let f = fuse_concat(&align(&[a, b]).unwrap()).unwrap();
        assert_eq!(f.dim(), 5);
        assert_eq!(f.row(0), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn concat_three_modalities_uses_fixed_order() {
        let t = table(Modality::Text, "x\t8\t8\t8\t8\t8\t8\t8\t8\n");
        let v = table(Modality::Visual, "x\t6\t6\t6\t6\t6\t6\n");
        let a = table(Modality::Audio, "x\t4\t4\t4\t4\n");
        let f = fuse_concat(&align(&[t, v, a]).unwrap()).unwrap();
        assert_eq!(f.dim(), 18);
        let row = f.row(0);
        assert_eq!(&row[..4], &[4.0; 4]);
        assert_eq!(&row[4..10], &[6.0; 6]);
        assert_eq!(&row[10..], &[8.0; 8]);
    }

    #[test]
    fn concat_single_block_is_identity() {
        let a = table(Modality::Audio, "x\t1\t2\ny\t3\t4\n");
        let al = align(std::slice::from_ref(&a)).unwrap();
        let f = fuse_concat(&al).unwrap();
        assert_eq!(f.matrix, al.blocks[0].matrix);
    }

    #[test]
    fn sign_fix_makes_largest_entry_positive() {
        let mut m = DMatrix::from_row_slice(2, 2, &[0.1, -0.2, -0.9, 0.3]);
        fix_signs(&mut m);
        assert_eq!(m[(1, 0)], 0.9);
        assert_eq!(m[(1, 1)], 0.3);
        assert_eq!(m[(0, 1)], -0.2);
    }
}

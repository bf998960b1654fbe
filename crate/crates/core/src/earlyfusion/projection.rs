use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FusionError, FusionOperator, FusionStage, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Pca,
    Cca,
}

/// A fitted linear map from (a subset of) the concatenated feature columns
/// to the fused space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionProjection {
    pub kind: ProjectionKind,
    /// `rho` for PCA, `k` for CCA.
    pub param: f64,
    /// Width of the input rows this projection expects.
    pub input_dim: usize,
    /// Input columns consumed, in loading-row order.
    pub columns: Vec<usize>,
    pub means: Vec<f64>,
    /// Column scales; zero marks a constant column that maps to 0.
    pub stds: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub loadings: DMatrix<f64>,
    pub retained: usize,
    /// Full eigen-spectrum (PCA) or canonical correlations (CCA), descending.
    pub spectrum: Vec<f64>,
}

impl FusionProjection {
    /// Centers, scales and projects `x` (rows of width `input_dim`).
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            return Err(FusionError::Argument(format!(
                "projection expects {} columns, got {}",
                self.input_dim,
                x.ncols()
            )));
        }
        let z = DMatrix::from_fn(x.nrows(), self.columns.len(), |r, j| {
            let s = self.stds[j];
            if s == 0.0 {
                0.0
            } else {
                (x[(r, self.columns[j])] - self.means[j]) / s
            }
        });
        Ok(z * &self.loadings)
    }
}

/// Versioned on-disk form of a fusion fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub format_version: u32,
    pub operator: FusionOperator,
    pub stage: FusionStage,
    pub projections: Vec<FusionProjection>,
}

impl FusionRecord {
    pub const VERSION: u32 = 1;

    pub fn new(operator: FusionOperator, stage: FusionStage, projections: Vec<FusionProjection>) -> Self {
        Self {
            format_version: Self::VERSION,
            operator,
            stage,
            projections,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| FusionError::Record(e.to_string()))?;
        fs::write(path, text).map_err(|source| FusionError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| FusionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let rec: Self = serde_json::from_str(&text).map_err(|e| FusionError::Record(e.to_string()))?;
        if rec.format_version != Self::VERSION {
            return Err(FusionError::Record(format!(
                "unsupported format version {}",
                rec.format_version
            )));
        }
        Ok(rec)
    }
}

pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        (m.nrows(), m.ncols(), rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let (nrows, ncols, rows): (usize, usize, Vec<Vec<f64>>) = Deserialize::deserialize(d)?;
        if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix shape does not match its rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
    }
}

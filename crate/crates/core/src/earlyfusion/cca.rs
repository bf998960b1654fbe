use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::pca::column_moments;
use super::{
    fix_signs, AlignedFeatures, FusedFeatures, FusionError, FusionOperator, FusionProjection,
    FusionStage, ProjectionKind, Result,
};
use crate::textprep::Modality;

/// Ridge added to each within-view covariance, relative to its mean
/// diagonal entry.
pub const CCA_RIDGE: f64 = 1e-9;

/// How the concatenated feature vector is divided into two views.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcaSplit {
    /// First `ceil(d/2)` columns against the remainder.
    #[default]
    Halves,
    /// Text columns against audio and visual columns.
    TextVsRest,
}

/// Canonical directions for both views, ordered by decreasing correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaFit {
    pub means1: Vec<f64>,
    pub means2: Vec<f64>,
    /// `p x m` with `m = min(p, q)`.
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub correlations: Vec<f64>,
}

fn centered(x: &DMatrix<f64>, means: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)] - means[c])
}

fn ridge_covariance(xc: &DMatrix<f64>) -> DMatrix<f64> {
    let n = xc.nrows() as f64;
    let mut c = (xc.transpose() * xc) / (n - 1.0);
    let d = c.nrows() as f64;
    let eps = if c.trace() > 0.0 { CCA_RIDGE * c.trace() / d } else { CCA_RIDGE };
    for j in 0..c.nrows() {
        c[(j, j)] += eps;
    }
    c
}

fn inverse_sqrt(c: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = c.clone().symmetric_eigen();
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}

/// Fits CCA between two views whose rows are paired samples.
///
/// Both within-view covariances are whitened (after the ridge), and the
/// singular value decomposition of the whitened cross-covariance yields the
/// canonical correlations and directions.
pub fn cca_fit(view1: &DMatrix<f64>, view2: &DMatrix<f64>) -> Result<CcaFit> {
    let n = view1.nrows();
    if view2.nrows() != n {
        return Err(FusionError::Argument("views must have the same number of rows".into()));
    }
    let (p, q) = (view1.ncols(), view2.ncols());
    if p == 0 || q == 0 {
        return Err(FusionError::Argument("both views need at least one column".into()));
    }
    if n < 2 {
        return Err(FusionError::InsufficientData(format!("cca needs at least 2 rows, got {n}")));
    }
    let (means1, _) = column_moments(view1);
    let (means2, _) = column_moments(view2);
    let x1 = centered(view1, &means1);
    let x2 = centered(view2, &means2);
    let c11 = ridge_covariance(&x1);
    let c22 = ridge_covariance(&x2);
    let c12 = (x1.transpose() * &x2) / (n as f64 - 1.0);
    let s1 = inverse_sqrt(&c11);
    let s2 = inverse_sqrt(&c22);
    let t = &s1 * c12 * &s2;
    let svd = t.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let m = p.min(q);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    order.truncate(m);
    let mut u_sorted = DMatrix::zeros(p, m);
    let mut v_sorted = DMatrix::zeros(q, m);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
    }
    let correlations = order
        .iter()
        .map(|&j| svd.singular_values[j].clamp(0.0, 1.0))
        .collect();
    let mut w1 = s1 * u_sorted;
    let mut w2 = s2 * v_sorted;
    for (j, flip) in fix_signs(&mut w1).into_iter().enumerate() {
        if flip < 0.0 {
            w2.column_mut(j).neg_mut();
        }
    }
    Ok(CcaFit {
        means1,
        means2,
        w1,
        w2,
        correlations,
    })
}

fn view_columns(mods: &[Modality], split: CcaSplit) -> (Vec<usize>, Vec<usize>) {
    let d = mods.len();
    match split {
        CcaSplit::Halves => {
            let h = d.div_ceil(2);
            ((0..h).collect(), (h..d).collect())
        }
        CcaSplit::TextVsRest => (0..d).partition(|&c| mods[c] == Modality::Text),
    }
}

/// Splits the concatenated features into two views, fits CCA and keeps the
/// first `k` canonical variates of the first view.
pub fn fit_apply_cca(aligned: &AlignedFeatures, k: usize, split: CcaSplit) -> Result<FusedFeatures> {
    let (x, mods) = aligned.concatenated();
    let (cols1, cols2) = view_columns(&mods, split);
    if cols1.is_empty() || cols2.is_empty() {
        return Err(FusionError::Argument(format!(
            "{split:?} split leaves an empty view over {} columns",
            mods.len()
        )));
    }
    let max_k = cols1.len().min(cols2.len());
    if k == 0 || k > max_k {
        return Err(FusionError::Argument(format!(
            "k must lie in 1..={max_k} for views of width {} and {}, got {k}",
            cols1.len(),
            cols2.len()
        )));
    }
    let n = aligned.n_items();
    if n <= cols1.len().max(k) {
        return Err(FusionError::InsufficientData(format!(
            "cca on {} columns per view needs more than {} items, got {n}",
            cols1.len(),
            cols1.len().max(k)
        )));
    }
    let view1 = x.select_columns(&cols1);
    let view2 = x.select_columns(&cols2);
    let fit = cca_fit(&view1, &view2)?;
    let projection = FusionProjection {
        kind: ProjectionKind::Cca,
        param: k as f64,
        input_dim: x.ncols(),
        stds: vec![1.0; cols1.len()],
        columns: cols1,
        means: fit.means1,
        loadings: fit.w1.columns(0, k).into_owned(),
        retained: k,
        spectrum: fit.correlations,
    };
    let matrix = projection.apply(&x)?;
    Ok(FusedFeatures {
        item_ids: aligned.item_ids.clone(),
        matrix,
        operator: FusionOperator::Cca { k },
        stage: FusionStage::Early,
        projections: vec![projection],
    })
}

use nalgebra::DMatrix;

use super::{
    sorted_symmetric_eigen, AlignedFeatures, FusedFeatures, FusionError, FusionOperator,
    FusionProjection, FusionStage, ProjectionKind, Result,
};

/// Eigenvalues below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Column mean and sample standard deviation; constant columns get std 0.
pub(crate) fn column_moments(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut stds = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let scale = col.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let std = var.sqrt();
        means.push(mean);
        stds.push(if std <= 1e-12 * scale { 0.0 } else { std });
    }
    (means, stds)
}

/// Smallest prefix length whose eigenvalue mass reaches `rho` of the total.
pub(crate) fn retained_components(spectrum: &[f64], rho: f64) -> usize {
    let total: f64 = spectrum.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let target = rho * total - 1e-12 * total;
    let mut cum = 0.0;
    for (j, l) in spectrum.iter().enumerate() {
        cum += l;
        if cum >= target {
            return j + 1;
        }
    }
    spectrum.len()
}

/// Z-scores the concatenated features, eigendecomposes their covariance and
/// projects onto the smallest set of leading components that retains a
/// `rho` fraction of the variance.
pub fn fit_apply_pca(aligned: &AlignedFeatures, rho: f64) -> Result<FusedFeatures> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(FusionError::Argument(format!("rho must lie in (0, 1], got {rho}")));
    }
    let n = aligned.n_items();
    if n < 2 {
        return Err(FusionError::InsufficientData(format!(
            "pca needs at least 2 items, got {n}"
        )));
    }
    let (x, _) = aligned.concatenated();
    let (means, stds) = column_moments(&x);
    let active: Vec<usize> = (0..x.ncols()).filter(|&j| stds[j] > 0.0).collect();
    if active.is_empty() {
        return Err(FusionError::InsufficientData("every feature column is constant".into()));
    }
    let z = DMatrix::from_fn(n, active.len(), |r, j| {
        let c = active[j];
        (x[(r, c)] - means[c]) / stds[c]
    });
    let cov = (z.transpose() * &z) / (n as f64 - 1.0);
    let (mut spectrum, vectors) = sorted_symmetric_eigen(&cov);
    let top = spectrum.first().copied().unwrap_or(0.0).max(0.0);
    for l in &mut spectrum {
        if *l < RANK_TOL * top * active.len() as f64 {
            *l = 0.0;
        }
    }
    let retained = retained_components(&spectrum, rho).max(1);

    let mut loadings = DMatrix::zeros(x.ncols(), retained);
    for (j, &c) in active.iter().enumerate() {
        for k in 0..retained {
            loadings[(c, k)] = vectors[(j, k)];
        }
    }
    let projection = FusionProjection {
        kind: ProjectionKind::Pca,
        param: rho,
        input_dim: x.ncols(),
        columns: (0..x.ncols()).collect(),
        means,
        stds,
        loadings,
        retained,
        spectrum,
    };
    let matrix = projection.apply(&x)?;
    Ok(FusedFeatures {
        item_ids: aligned.item_ids.clone(),
        matrix,
        operator: FusionOperator::Pca { rho },
        stage: FusionStage::Early,
        projections: vec![projection],
    })
}

mod common;

use common::*;
use mmrec::earlyfusion::{
    align, cca_fit, fit_apply_cca, fit_apply_pca, fuse, fuse_concat, AlignedFeatures, CcaSplit,
    FeatureBlock, FusionOperator, FusionRecord, FusionStage,
};
use mmrec::textprep::{EmbeddingTable, Modality};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_dm(x: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), x[0].len(), |r, c| x[r][c])
}

fn from_dm(x: &DMatrix<f64>) -> Mat {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn single_block(x: &Mat) -> AlignedFeatures {
    AlignedFeatures {
        item_ids: (0..x.len()).map(|i| format!("{i:05}")).collect(),
        blocks: vec![FeatureBlock {
            modality: Modality::Text,
            variant: "t".into(),
            matrix: to_dm(x),
        }],
        dropped: vec![0],
    }
}

fn hstack(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().chain(y).copied().collect()).collect()
}

/// 500 x 10 sample whose correlation spectrum is dominated by a few planted
/// directions.
fn planted_spectrum(seed: u64) -> Mat {
    let mut r = rng(seed);
    let scales = [6.0, 4.0, 3.0, 2.0, 1.0, 0.6, 0.4, 0.3, 0.2, 0.1];
    let raw: Mat = (0..500)
        .map(|_| scales.iter().map(|s| s * normal(&mut r)).collect())
        .collect();
    let mix = random_invertible(&mut r, 10);
    matmul(&raw, &mix)
}

#[test]
fn pca_isotropic_three_dims_keeps_two() {
    let mut r = rng(7);
    let x: Mat = (0..40000).map(|_| (0..3).map(|_| normal(&mut r)).collect()).collect();
    // oracle spectrum of the z-scored sample
    let corr = {
        let c = covariance(&x);
        let s: Vec<f64> = (0..3).map(|j| c[j][j].sqrt()).collect();
        (0..3).map(|a| (0..3).map(|b| c[a][b] / (s[a] * s[b])).collect()).collect::<Mat>()
    };
    let ev = jacobi_eigenvalues(&corr);
    let total: f64 = ev.iter().sum();
    assert!(ev[0] / total < 0.34 && (ev[0] + ev[1]) / total >= 0.34);
    let f = fit_apply_pca(&single_block(&x), 0.34).unwrap();
    assert_eq!(f.dim(), 2);
    let p = &f.projections[0];
    for (a, b) in p.spectrum.iter().zip(&ev) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn pca_contract_on_planted_spectrum() {
    let x = planted_spectrum(11);
    for rho in [0.5, 0.8, 0.95, 1.0] {
        let f = fit_apply_pca(&single_block(&x), rho).unwrap();
        let p = &f.projections[0];
        let total: f64 = p.spectrum.iter().sum();
        let d = p.retained;
        let cum = |m: usize| p.spectrum[..m].iter().sum::<f64>() / total;
        assert!(cum(d) >= rho - 1e-12);
        if d > 1 {
            assert!(cum(d - 1) < rho);
        }
        let gram = p.loadings.transpose() * &p.loadings;
        assert!((gram - DMatrix::identity(d, d)).abs().max() < 1e-8);
        let cov = covariance(&from_dm(&f.matrix));
        for j in 0..d {
            assert!((cov[j][j] - p.spectrum[j]).abs() <= 1e-6 * p.spectrum[j]);
            for k in 0..d {
                if j != k {
                    assert!(cov[j][k].abs() < 1e-6 * p.spectrum[0]);
                }
            }
        }
    }
}

#[test]
fn pca_lossless_reconstructs_zscores() {
    let x = planted_spectrum(3);
    let f = fit_apply_pca(&single_block(&x), 1.0).unwrap();
    let p = &f.projections[0];
    let recon = &f.matrix * p.loadings.transpose();
    let z = DMatrix::from_fn(x.len(), 10, |r, c| (x[r][c] - p.means[c]) / p.stds[c]);
    assert!((recon - z).abs().max() < 1e-8);
}

#[test]
fn cca_independent_views_are_weakly_correlated() {
    let mut r = rng(5);
    let v1: Mat = (0..5000).map(|_| (0..4).map(|_| normal(&mut r)).collect()).collect();
    let v2: Mat = (0..5000).map(|_| (0..4).map(|_| normal(&mut r)).collect()).collect();
    let fit = cca_fit(&to_dm(&v1), &to_dm(&v2)).unwrap();
    assert!(fit.correlations.iter().all(|&c| c < 0.15), "{:?}", fit.correlations);
    let oracle = cca_oracle(&v1, &v2);
    for (a, b) in fit.correlations.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
}

#[test]
fn cca_recovers_planted_correlations() {
    let (v1, v2) = planted_two_view(5000, [0.9, 0.5], 21);
    let aligned = single_block(&hstack(&v1, &v2));
    let f = fit_apply_cca(&aligned, 2, CcaSplit::Halves).unwrap();
    let s = &f.projections[0].spectrum;
    assert!((s[0] - 0.9).abs() < 0.05 && (s[1] - 0.5).abs() < 0.05, "{s:?}");
    let oracle = cca_oracle(&v1, &v2);
    for (a, b) in s.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-5, "{a} vs {b}");
    }
    assert_eq!(f.dim(), 2);
}

#[test]
fn cca_is_affine_invariant() {
    let (v1, v2) = planted_two_view(2000, [0.8, 0.3], 4);
    let base = cca_fit(&to_dm(&v1), &to_dm(&v2)).unwrap().correlations;
    let mut r = rng(99);
    for _ in 0..10 {
        let m1 = random_invertible(&mut r, 2);
        let m2 = random_invertible(&mut r, 2);
        let t1 = affine(&v1, &m1, &[3.0, -1.0]);
        let t2 = affine(&v2, &m2, &[0.5, 7.0]);
        let c = cca_fit(&to_dm(&t1), &to_dm(&t2)).unwrap().correlations;
        for (a, b) in base.iter().zip(&c) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn fusion_is_deterministic() {
    let x = planted_spectrum(8);
    let a = single_block(&x);
    for op in [FusionOperator::Concat, FusionOperator::Pca { rho: 0.9 }, FusionOperator::Cca { k: 3 }] {
        let f1 = fuse(&a, op, FusionStage::Early, CcaSplit::Halves).unwrap();
        let f2 = fuse(&a, op, FusionStage::Early, CcaSplit::Halves).unwrap();
        assert_eq!(f1, f2);
    }
}

#[test]
fn mid_fusion_projects_each_block() {
    let x = planted_spectrum(2);
    let left: Mat = x.iter().map(|r| r[..6].to_vec()).collect();
    let right: Mat = x.iter().map(|r| r[6..].to_vec()).collect();
    let aligned = AlignedFeatures {
        item_ids: (0..x.len()).map(|i| i.to_string()).collect(),
        blocks: vec![
            FeatureBlock { modality: Modality::Visual, variant: "cnn".into(), matrix: to_dm(&left) },
            FeatureBlock { modality: Modality::Audio, variant: "blf".into(), matrix: to_dm(&right) },
        ],
        dropped: vec![0, 0],
    };
    let f = fuse(&aligned, FusionOperator::Pca { rho: 1.0 }, FusionStage::Mid, CcaSplit::Halves).unwrap();
    assert_eq!(f.projections.len(), 2);
    assert_eq!(f.dim(), 10);
    // each projection reproduces its slice of the fused matrix from the full concatenation
    let (concat, _) = aligned.concatenated();
    let mut off = 0;
    for p in &f.projections {
        let part = p.apply(&concat).unwrap();
        let slice = f.matrix.columns(off, part.ncols());
        assert!((part - slice).abs().max() < 1e-12);
        off += p.retained;
    }
    let c = fuse(&aligned, FusionOperator::Cca { k: 2 }, FusionStage::Mid, CcaSplit::Halves).unwrap();
    assert_eq!(c.dim(), 4);
}

#[test]
fn fusion_record_round_trips() {
    let x = planted_spectrum(1);
    let f = fit_apply_pca(&single_block(&x), 0.9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fusion.json");
    let rec = FusionRecord::new(f.operator, f.stage, f.projections.clone());
    rec.save(&path).unwrap();
    let back = FusionRecord::load(&path).unwrap();
    assert_eq!(back, rec);
    let again = back.projections[0].apply(&to_dm(&x)).unwrap();
    assert_eq!(again, f.matrix);
}

fn table_from(m: Modality, rows: &[Vec<f64>]) -> EmbeddingTable {
    let mut t = EmbeddingTable::new(m, "v", rows[0].len());
    for (i, r) in rows.iter().enumerate() {
        t.insert(format!("i{i}"), r.clone()).unwrap();
    }
    t
}

proptest! {
    #[test]
    fn concat_preserves_blocks_bitwise(
        n in 1usize..6,
        d1 in 1usize..4,
        d2 in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let a: Vec<Vec<f64>> = (0..n).map(|_| (0..d1).map(|_| normal(&mut r)).collect()).collect();
        let b: Vec<Vec<f64>> = (0..n).map(|_| (0..d2).map(|_| normal(&mut r)).collect()).collect();
        let aligned = align(&[table_from(Modality::Visual, &a), table_from(Modality::Text, &b)]).unwrap();
        let f = fuse_concat(&aligned).unwrap();
        prop_assert_eq!(f.dim(), d1 + d2);
        prop_assert_eq!(f.matrix.columns(0, d1).into_owned(), aligned.blocks[0].matrix.clone());
        prop_assert_eq!(f.matrix.columns(d1, d2).into_owned(), aligned.blocks[1].matrix.clone());
    }

    #[test]
    fn cca_correlations_sorted_and_bounded(seed in any::<u64>(), n in 8usize..40) {
        let mut r = rng(seed);
        let x: Mat = (0..n).map(|_| (0..5).map(|_| normal(&mut r)).collect()).collect();
        let f = fit_apply_cca(&single_block(&x), 2, CcaSplit::Halves).unwrap();
        let s = &f.projections[0].spectrum;
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.iter().all(|&c| (0.0..=1.0).contains(&c)));
    }
}

//! Test-only oracles and synthetic data builders. Nothing here calls into the
//! linear algebra used by the library.
#![allow(dead_code)]

pub mod corpus_check;
pub mod metric_oracle;
pub mod rank_oracle;
pub mod synth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn zeros(r: usize, c: usize) -> Mat {
    vec![vec![0.0; c]; r]
}

pub fn transpose(a: &Mat) -> Mat {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len()).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, m);
    for i in 0..n {
        for t in 0..k {
            let x = a[i][t];
            for j in 0..m {
                out[i][j] += x * b[t][j];
            }
        }
    }
    out
}

pub fn covariance(x: &Mat) -> Mat {
    let n = x.len();
    let d = x[0].len();
    let means: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = zeros(d, d);
    for r in x {
        for a in 0..d {
            for b in 0..d {
                c[a][b] += (r[a] - means[a]) * (r[b] - means[b]);
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= n as f64 - 1.0;
        }
    }
    c
}

/// Cyclic Jacobi eigenvalue iteration; returns eigenvalues descending.
pub fn jacobi_eigenvalues(a: &Mat) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Orthonormal basis of the centered columns via modified Gram-Schmidt.
fn centered_orthobasis(x: &Mat) -> Mat {
    let n = x.len();
    let d = x[0].len();
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mean = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            x.iter().map(|r| r[j] - mean).collect()
        })
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for col in cols.iter_mut() {
        for b in &basis {
            let dot: f64 = col.iter().zip(b).map(|(a, b)| a * b).sum();
            col.iter_mut().zip(b).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-10 {
            basis.push(col.iter().map(|v| v / norm).collect());
        }
    }
    transpose(&basis)
}

/// Canonical correlations as singular values of `Q1' Q2`, where `Q1`, `Q2`
/// orthonormalize the centered views.
pub fn cca_oracle(view1: &Mat, view2: &Mat) -> Vec<f64> {
    let q1 = centered_orthobasis(view1);
    let q2 = centered_orthobasis(view2);
    let m = matmul(&transpose(&q1), &q2);
    let mtm = matmul(&transpose(&m), &m);
    let mut s: Vec<f64> = jacobi_eigenvalues(&mtm).into_iter().map(|l| l.max(0.0).sqrt()).collect();
    s.truncate(q1[0].len().min(q2[0].len()));
    s
}

/// Two views of width 2 whose canonical correlations are `rhos`, each mixed
/// by a random invertible map.
pub fn planted_two_view(n: usize, rhos: [f64; 2], seed: u64) -> (Mat, Mat) {
    let mut r = rng(seed);
    let mut a = zeros(n, 2);
    let mut b = zeros(n, 2);
    for i in 0..n {
        for j in 0..2 {
            let z = normal(&mut r);
            let s = rhos[j].sqrt();
            let t = (1.0 - rhos[j]).sqrt();
            a[i][j] = s * z + t * normal(&mut r);
            b[i][j] = s * z + t * normal(&mut r);
        }
    }
    let m1 = random_invertible(&mut r, 2);
    let m2 = random_invertible(&mut r, 2);
    (matmul(&a, &m1), matmul(&b, &m2))
}

pub fn random_invertible(r: &mut ChaCha8Rng, d: usize) -> Mat {
    loop {
        let m: Mat = (0..d).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        if d == 2 {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det.abs() > 0.3 {
                return m;
            }
        } else {
            let ev = jacobi_eigenvalues(&matmul(&transpose(&m), &m));
            if ev[d - 1] > 0.05 {
                return m;
            }
        }
    }
}

pub fn affine(x: &Mat, m: &Mat, shift: &[f64]) -> Mat {
    matmul(x, m)
        .into_iter()
        .map(|row| row.iter().zip(shift).map(|(v, s)| v + s).collect())
        .collect()
}

/// Largest relative disagreement between `analytic` and central differences
/// of `f` at `x`. Magnitudes below `1e-3` count as `1e-3` so that entries
/// whose true derivative is zero compare on an absolute scale.
pub fn max_grad_rel_error(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], h: f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        probe[k] = x[k] + h;
        let up = f(&probe);
        probe[k] = x[k] - h;
        let down = f(&probe);
        probe[k] = x[k];
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

/// Area under the ROC curve by counting every positive/negative pair; ties
/// count one half.
pub fn pair_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

pub fn unit_gaussian(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| normal(r)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Implicit-feedback corpus whose preferences are linear in item features.
pub struct Planted {
    pub n_users: usize,
    pub n_items: usize,
    /// Unit-norm item features.
    pub features: Mat,
    pub events: Vec<(usize, usize)>,
}

/// Each user consumes `per_user` items drawn without replacement by
/// Gumbel-top-k on `sharpness * taste_u . e_i`; when `latent_users` is
/// non-zero, the first `latent_users` users instead follow tastes over a
/// hidden item factor unrelated to the features.
pub fn planted_corpus(
    n_users: usize,
    n_items: usize,
    de: usize,
    per_user: usize,
    sharpness: f64,
    latent_users: usize,
    seed: u64,
) -> Planted {
    let mut r = rng(seed);
    let features: Mat = (0..n_items).map(|_| unit_gaussian(&mut r, de)).collect();
    let hidden: Mat = (0..n_items).map(|_| unit_gaussian(&mut r, de)).collect();
    let mut events = Vec::new();
    for u in 0..n_users {
        let taste = unit_gaussian(&mut r, de);
        let source = if u < latent_users { &hidden } else { &features };
        let mut keyed: Vec<(f64, usize)> = (0..n_items)
            .map(|i| {
                let s: f64 = taste.iter().zip(&source[i]).map(|(a, b)| a * b).sum();
                let g: f64 = -(-(r.random::<f64>().max(1e-300)).ln()).ln();
                (sharpness * s + g, i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in keyed.iter().take(per_user) {
            events.push((u, i));
        }
    }
    Planted {
        n_users,
        n_items,
        features,
        events,
    }
}

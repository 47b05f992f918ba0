use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{ensure, Error, Result};

pub const WITHIN_RIDGE: f64 = 1e-6;

/// Linear discriminant projection onto `dims` directions.
#[derive(Clone, Debug)]
pub struct Lda {
    pub mean: DVector<f64>,
    /// `[D, dims]`, columns ordered by decreasing discriminant ratio.
    pub projection: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl Lda {
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let x = DVector::from_column_slice(v) - &self.mean;
        (self.projection.transpose() * x).iter().copied().collect()
    }

    pub fn project_all(&self, vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        vs.iter().map(|v| self.project(v)).collect()
    }
}

fn check(vectors: &[Vec<f64>], labels: &[u32]) -> Result<usize> {
    ensure!(!vectors.is_empty(), "no vectors");
    ensure!(vectors.len() == labels.len(), "{} vectors but {} labels", vectors.len(), labels.len());
    let d = vectors[0].len();
    ensure!(d >= 1 && vectors.iter().all(|v| v.len() == d), "vectors must share a non-zero dimension");
    Ok(d)
}

/// Fits LDA by solving `S_b w = lambda (S_w + ridge I) w`.
pub fn lda_fit(vectors: &[Vec<f64>], labels: &[u32], dims: usize) -> Result<Lda> {
    let d = check(vectors, labels)?;
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    ensure!(dims >= 1 && dims < groups.len(), "dims must lie in 1..{} for {} classes", groups.len(), groups.len());
    ensure!(dims <= d, "dims {dims} exceeds the input dimension {d}");

    let col = |i: usize| DVector::from_column_slice(&vectors[i]);
    let n = vectors.len() as f64;
    let mean = (0..vectors.len()).fold(DVector::zeros(d), |acc, i| acc + col(i)) / n;
    let mut sw = DMatrix::<f64>::zeros(d, d);
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for idx in groups.values() {
        let mc = idx.iter().fold(DVector::zeros(d), |acc, &i| acc + col(i)) / idx.len() as f64;
        for &i in idx {
            let r = col(i) - &mc;
            sw += &r * r.transpose();
        }
        let r = &mc - &mean;
        sb += (&r * r.transpose()) * idx.len() as f64;
    }
    sw += DMatrix::identity(d, d) * WITHIN_RIDGE;

    let chol = sw.cholesky().ok_or_else(|| Error::Numeric {
        op: "lda_fit",
        detail: "within-class scatter is not positive definite".into(),
    })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Numeric {
        op: "lda_fit",
        detail: "singular Cholesky factor".into(),
    })?;
    let m = &linv * sb * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut projection = DMatrix::zeros(d, dims);
    for (j, &k) in order.iter().take(dims).enumerate() {
        let w = linv.transpose() * eig.eigenvectors.column(k);
        projection.set_column(j, &(&w / w.norm()));
    }
    Ok(Lda {
        mean,
        projection,
        eigenvalues: order.iter().take(dims).map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// Leave-one-out k-nearest-neighbour accuracy under the Euclidean metric.
/// Vote ties go to the class with the smallest summed distance.
pub fn knn_loo(vectors: &[Vec<f64>], labels: &[u32], k: usize) -> Result<f64> {
    check(vectors, labels)?;
    ensure!(k >= 1 && k < vectors.len(), "k must lie in 1..{}", vectors.len());
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut correct = 0;
    for (i, v) in vectors.iter().enumerate() {
        let mut near: Vec<(f64, usize)> = vectors
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, w)| (dist(v, w), j))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
        for &(dst, j) in &near[..k] {
            let e = votes.entry(labels[j]).or_default();
            e.0 += 1;
            e.1 += dst;
        }
        let guess = votes
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.total_cmp(&a.1 .1)))
            .map(|(&c, _)| c)
            .expect("k >= 1");
        correct += usize::from(guess == labels[i]);
    }
    Ok(correct as f64 / vectors.len() as f64)
}

//! Evaluation suite: classification accuracy of translated images, Frechet
//! distance / FID, inception score, kernel inception distance, and Spearman
//! rank correlation between metric series.
//!
//! The embedding extractor is pluggable; at desk scale it is the penultimate
//! layer of the clean-trained evaluation CNN. All estimator math lives here
//! and is exercised on synthetic Gaussians independent of any network.

mod eval_cls;

pub use eval_cls::{train_eval_classifier, EvalClassifier};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayD};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    RealTrain,
    Generated,
}

/// n x d embedding matrix with provenance.
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    pub vectors: Array2<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingSet {
    pub fn new(vectors: Array2<f64>, source: EmbeddingSource) -> Result<Self> {
        if vectors.nrows() < 2 {
            return Err(Error::invalid_input(
                "embedding sets need n >= 2 for covariance statistics",
            ));
        }
        Ok(EmbeddingSet { vectors, source })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Per-evaluation metric values. `kid` may be slightly negative (unbiased
/// estimator); everything else obeys its range invariant.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub epoch: usize,
    /// Percent of translated test images classified as their target domain.
    pub ca: f64,
    pub fid: f64,
    pub is_score: f64,
    pub kid: f64,
    pub kid_splits: Vec<f64>,
}

impl MetricsReport {
    pub fn validate(&self, num_domains: usize) -> Result<()> {
        if !(0.0..=100.0).contains(&self.ca) {
            return Err(Error::Numerical(format!("CA {} outside [0,100]", self.ca)));
        }
        if self.fid < 0.0 || !self.fid.is_finite() {
            return Err(Error::Numerical(format!("FID {} invalid", self.fid)));
        }
        let c = num_domains as f64;
        if !(1.0 - 1e-9..=c + 1e-9).contains(&self.is_score) {
            return Err(Error::Numerical(format!(
                "IS {} outside [1, {c}]",
                self.is_score
            )));
        }
        if !self.kid.is_finite() {
            return Err(Error::Numerical("KID not finite".to_string()));
        }
        Ok(())
    }
}

/// Sample mean and unbiased covariance of an embedding set.
pub fn mean_and_cov(set: &EmbeddingSet) -> (Array1<f64>, Array2<f64>) {
    let n = set.len() as f64;
    let d = set.dim();
    let mean = set
        .vectors
        .mean_axis(ndarray::Axis(0))
        .expect("nonempty embedding set");
    let mut cov = Array2::<f64>::zeros((d, d));
    for row in set.vectors.rows() {
        let centered = &row.to_owned() - &mean;
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    cov.mapv_inplace(|v| v / (n - 1.0));
    (mean, cov)
}

fn check_symmetric(m: &Array2<f64>, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid_input(format!("{name} is not square")));
    }
    let scale = m.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::invalid_input(format!(
                    "{name} is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Symmetric matrix square root by eigendecomposition, negative eigenvalues
/// clamped at zero.
fn sqrtm_psd(m: &Array2<f64>) -> Array2<f64> {
    let d = m.nrows();
    let dm = DMatrix::from_fn(d, d, |i, j| (m[(i, j)] + m[(j, i)]) / 2.0);
    let eig = dm.symmetric_eigen();
    let sqrt_vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let q = &eig.eigenvectors;
    let mut out = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += q[(i, k)] * sqrt_vals[k] * q[(j, k)];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Squared 2-Wasserstein distance between Gaussians:
/// `||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))`.
pub fn frechet_distance(
    mu1: &Array1<f64>,
    sigma1: &Array2<f64>,
    mu2: &Array1<f64>,
    sigma2: &Array2<f64>,
) -> Result<f64> {
    check_symmetric(sigma1, "sigma1")?;
    check_symmetric(sigma2, "sigma2")?;
    if mu1.len() != mu2.len() || sigma1.nrows() != mu1.len() || sigma2.nrows() != mu2.len() {
        return Err(Error::invalid_input("dimension mismatch in Gaussians"));
    }
    let diff = mu1 - mu2;
    let mean_term: f64 = diff.iter().map(|v| v * v).sum();
    // Tr((S1 S2)^(1/2)) = Tr(sqrt(sqrt(S1) S2 sqrt(S1)))
    let a = sqrtm_psd(sigma1);
    let inner = a.dot(sigma2).dot(&a);
    let d = inner.nrows();
    let dm = DMatrix::from_fn(d, d, |i, j| (inner[(i, j)] + inner[(j, i)]) / 2.0);
    let eig = dm.symmetric_eigen();
    let tr_sqrt: f64 = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).sum();
    let tr1: f64 = (0..sigma1.nrows()).map(|i| sigma1[(i, i)]).sum();
    let tr2: f64 = (0..sigma2.nrows()).map(|i| sigma2[(i, i)]).sum();
    Ok(mean_term + tr1 + tr2 - 2.0 * tr_sqrt)
}

/// FID between two embedding sets (Gaussian fits; tiny negative rounding
/// residue clamps to zero).
pub fn fid(real: &EmbeddingSet, generated: &EmbeddingSet) -> Result<f64> {
    if real.dim() != generated.dim() {
        return Err(Error::invalid_input("embedding dimension mismatch"));
    }
    let (mu1, s1) = mean_and_cov(real);
    let (mu2, s2) = mean_and_cov(generated);
    Ok(frechet_distance(&mu1, &s1, &mu2, &s2)?.max(0.0))
}

/// Inception score from an n x c matrix of class probabilities:
/// `exp(mean_i KL(p(y|x_i) || mean_j p(y|x_j)))`.
pub fn inception_score(class_probs: &Array2<f64>) -> Result<f64> {
    if class_probs.nrows() == 0 {
        return Err(Error::invalid_input("empty probability matrix"));
    }
    for (i, row) in class_probs.rows().into_iter().enumerate() {
        let sum: f64 = row.sum();
        if (sum - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid_input(format!(
                "row {i} is not a probability distribution (sum {sum})"
            )));
        }
    }
    let marginal = class_probs
        .mean_axis(ndarray::Axis(0))
        .expect("nonempty matrix");
    let mut mean_kl = 0.0;
    for row in class_probs.rows() {
        let mut kl = 0.0;
        for (p, q) in row.iter().zip(marginal.iter()) {
            if *p > 0.0 {
                kl += p * (p / q).ln();
            }
        }
        mean_kl += kl;
    }
    mean_kl /= class_probs.nrows() as f64;
    Ok(mean_kl.exp())
}

/// The cubic polynomial kernel `(u.v / d + 1)^3`.
fn poly_kernel(u: &[f64], v: &[f64]) -> f64 {
    let d = u.len() as f64;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    (dot / d + 1.0).powi(3)
}

/// Unbiased squared MMD with the cubic polynomial kernel over one pair of
/// index subsets.
pub fn mmd2_unbiased(
    real: &EmbeddingSet,
    generated: &EmbeddingSet,
    real_idx: &[usize],
    gen_idx: &[usize],
) -> f64 {
    let m = real_idx.len() as f64;
    let n = gen_idx.len() as f64;
    let row = |set: &EmbeddingSet, i: usize| set.vectors.row(i).to_owned();
    let mut k_xx = 0.0;
    for (a, &i) in real_idx.iter().enumerate() {
        for &j in &real_idx[a + 1..] {
            k_xx += poly_kernel(
                row(real, i).as_slice().unwrap(),
                row(real, j).as_slice().unwrap(),
            );
        }
    }
    let mut k_yy = 0.0;
    for (a, &i) in gen_idx.iter().enumerate() {
        for &j in &gen_idx[a + 1..] {
            k_yy += poly_kernel(
                row(generated, i).as_slice().unwrap(),
                row(generated, j).as_slice().unwrap(),
            );
        }
    }
    let mut k_xy = 0.0;
    for &i in real_idx {
        for &j in gen_idx {
            k_xy += poly_kernel(
                row(real, i).as_slice().unwrap(),
                row(generated, j).as_slice().unwrap(),
            );
        }
    }
    2.0 * k_xx / (m * (m - 1.0)) + 2.0 * k_yy / (n * (n - 1.0)) - 2.0 * k_xy / (m * n)
}

/// The subsets each split draws, without replacement within a split.
pub fn kid_split_indices(
    n_real: usize,
    n_gen: usize,
    num_splits: usize,
    split_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if n_real < split_size || n_gen < split_size || split_size < 2 {
        return Err(Error::invalid_input(format!(
            "KID needs at least split_size={split_size} samples per set (real {n_real}, generated {n_gen})"
        )));
    }
    let mut splits = Vec::with_capacity(num_splits);
    for _ in 0..num_splits {
        splits.push((
            sample_without_replacement(n_real, split_size, rng),
            sample_without_replacement(n_gen, split_size, rng),
        ));
    }
    Ok(splits)
}

fn sample_without_replacement(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut all: Vec<usize> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(k);
    all
}

/// KID: mean unbiased MMD^2 over `num_splits` subsets of size `split_size`
/// (the defaults are 10 splits of 50).
pub fn kid(
    real: &EmbeddingSet,
    generated: &EmbeddingSet,
    num_splits: usize,
    split_size: usize,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<f64>)> {
    if real.dim() != generated.dim() {
        return Err(Error::invalid_input("embedding dimension mismatch"));
    }
    let splits = kid_split_indices(real.len(), generated.len(), num_splits, split_size, rng)?;
    let values: Vec<f64> = splits
        .iter()
        .map(|(ri, gi)| mmd2_unbiased(real, generated, ri, gi))
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok((mean, values))
}

pub const KID_DEFAULT_SPLITS: usize = 10;
pub const KID_DEFAULT_SPLIT_SIZE: usize = 50;

/// Ranks with average ties.
fn ranks(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| series[i].partial_cmp(&series[j]).unwrap());
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && series[order[j + 1]] == series[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg_rank;
        }
        i = j + 1;
    }
    out
}

/// Absolute Spearman rank correlation with average ranks for ties.
/// A constant series has no defined rank correlation and is rejected.
pub fn spearman_abs(series_a: &[f64], series_b: &[f64]) -> Result<f64> {
    if series_a.len() != series_b.len() || series_a.len() < 2 {
        return Err(Error::invalid_input(
            "spearman needs equal-length series with n >= 2",
        ));
    }
    for (name, s) in [("a", series_a), ("b", series_b)] {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("series {name} has non-finite values")));
        }
        if s.iter().all(|&v| v == s[0]) {
            return Err(Error::Numerical(format!(
                "series {name} is constant; rank correlation undefined"
            )));
        }
    }
    let ra = ranks(series_a);
    let rb = ranks(series_b);
    let n = ra.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (a, b) in ra.iter().zip(&rb) {
        cov += (a - mean_a) * (b - mean_b);
        var_a += (a - mean_a) * (a - mean_a);
        var_b += (b - mean_b) * (b - mean_b);
    }
    Ok((cov / (var_a * var_b).sqrt()).abs())
}

/// Pick, per sample, a target domain different from the clean one,
/// uniformly over the c-1 alternatives.
pub fn different_domain_targets(
    clean: &[usize],
    num_domains: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    clean
        .iter()
        .map(|&y| {
            let offset = rng.random_range(1..num_domains);
            (y + offset) % num_domains
        })
        .collect()
}

/// Classification accuracy (percent): translate each test image to a domain
/// different from its own, then score with the clean evaluation classifier.
/// Generic over the translation and classification hooks so degenerate
/// translators (nonconversion) and oracle classifiers are testable.
pub fn classification_accuracy_with<T: Scalar>(
    images: &ArrayD<T>,
    clean_labels: &[usize],
    num_domains: usize,
    mut translate: impl FnMut(&ArrayD<T>, &[usize]) -> Result<ArrayD<T>>,
    mut classify: impl FnMut(&ArrayD<T>) -> Result<Vec<usize>>,
    rng: &mut impl Rng,
) -> Result<f64> {
    if images.shape()[0] != clean_labels.len() || clean_labels.is_empty() {
        return Err(Error::invalid_input(
            "CA needs a nonempty image batch aligned with its labels",
        ));
    }
    let targets = different_domain_targets(clean_labels, num_domains, rng);
    let translated = translate(images, &targets)?;
    let predicted = classify(&translated)?;
    let hits = predicted
        .iter()
        .zip(&targets)
        .filter(|(p, t)| p == t)
        .count();
    Ok(100.0 * hits as f64 / targets.len() as f64)
}

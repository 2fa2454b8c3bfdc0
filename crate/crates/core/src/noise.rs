//! Label-noise simulation: transition matrices and corruption.
//!
//! Symmetric noise flips a label uniformly to any other class with
//! probability `mu`; asymmetric noise flips it to the circularly next class.
//! Multi-label (binary attribute) corruption flips each bit independently.

use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Symmetric,
    Asymmetric,
    PerAttributeFlip,
}

/// How to corrupt a dataset's labels.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub num_domains: usize,
}

impl NoiseSpec {
    pub fn clean(num_domains: usize) -> Self {
        NoiseSpec {
            kind: NoiseKind::None,
            rate: 0.0,
            num_domains,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) || !self.rate.is_finite() {
            return Err(Error::invalid_spec(format!(
                "noise rate {} outside [0,1]",
                self.rate
            )));
        }
        if self.num_domains < 2 {
            return Err(Error::invalid_spec(format!(
                "num_domains {} < 2",
                self.num_domains
            )));
        }
        if self.kind == NoiseKind::None && self.rate != 0.0 {
            return Err(Error::invalid_spec(
                "kind=none requires rate=0".to_string(),
            ));
        }
        Ok(())
    }

    /// The transition matrix for single-label kinds (identity for `None`).
    pub fn transition_matrix(&self) -> Result<TransitionMatrix> {
        self.validate()?;
        match self.kind {
            NoiseKind::None => TransitionMatrix::identity(self.num_domains),
            NoiseKind::Symmetric => build_symmetric(self.num_domains, self.rate),
            NoiseKind::Asymmetric => build_asymmetric(self.num_domains, self.rate),
            NoiseKind::PerAttributeFlip => Err(Error::invalid_spec(
                "per-attribute flips have no class transition matrix".to_string(),
            )),
        }
    }
}

/// Row-stochastic corruption model: `entries[i][j] = p(noisy=j | clean=i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    entries: Array2<f64>,
}

const ROW_SUM_TOL: f64 = 1e-9;

impl TransitionMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() < 2 {
            return Err(Error::invalid_spec(format!(
                "transition matrix must be square with c >= 2, got {:?}",
                entries.shape()
            )));
        }
        for (i, row) in entries.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid_spec(format!(
                    "row {i} has an entry outside [0,1]"
                )));
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::invalid_spec(format!(
                    "row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(TransitionMatrix { entries })
    }

    pub fn identity(c: usize) -> Result<Self> {
        TransitionMatrix::new(Array2::eye(c))
    }

    pub fn num_classes(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn is_identity(&self) -> bool {
        self.entries == Array2::<f64>::eye(self.num_classes())
    }

    /// Draw a noisy label from row `clean`.
    pub fn sample(&self, clean: usize, rng: &mut impl Rng) -> usize {
        let row = self.entries.row(clean);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.len() - 1
    }
}

/// Uniform-flip noise: diagonal 1-mu, off-diagonal mu/(c-1).
pub fn build_symmetric(c: usize, mu: f64) -> Result<TransitionMatrix> {
    validate_noise_params(c, mu)?;
    let off = mu / (c as f64 - 1.0);
    let entries = Array2::from_shape_fn((c, c), |(i, j)| if i == j { 1.0 - mu } else { off });
    TransitionMatrix::new(entries)
}

/// Circular-flip noise: diagonal 1-mu, entry (i, (i+1) mod c) = mu.
pub fn build_asymmetric(c: usize, mu: f64) -> Result<TransitionMatrix> {
    validate_noise_params(c, mu)?;
    let entries = Array2::from_shape_fn((c, c), |(i, j)| {
        if i == j {
            1.0 - mu
        } else if j == (i + 1) % c {
            mu
        } else {
            0.0
        }
    });
    TransitionMatrix::new(entries)
}

fn validate_noise_params(c: usize, mu: f64) -> Result<()> {
    if c < 2 {
        return Err(Error::invalid_spec(format!("domain count {c} < 2")));
    }
    if !(0.0..=1.0).contains(&mu) || !mu.is_finite() {
        return Err(Error::invalid_spec(format!("noise rate {mu} outside [0,1]")));
    }
    Ok(())
}

/// Corrupt each label independently by sampling row `T[label]`.
pub fn corrupt(labels: &[usize], t: &TransitionMatrix, rng: &mut impl Rng) -> Result<Vec<usize>> {
    let c = t.num_classes();
    labels
        .iter()
        .map(|&y| {
            if y >= c {
                return Err(Error::invalid_input(format!(
                    "label {y} out of range for {c} domains"
                )));
            }
            Ok(t.sample(y, rng))
        })
        .collect()
}

/// Flip each bit of each attribute vector independently with probability `mu`.
pub fn corrupt_multilabel(
    labels: &[Vec<bool>],
    mu: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<bool>>> {
    if !(0.0..=1.0).contains(&mu) || !mu.is_finite() {
        return Err(Error::invalid_spec(format!("noise rate {mu} outside [0,1]")));
    }
    let width = labels.first().map(|v| v.len()).unwrap_or(0);
    labels
        .iter()
        .enumerate()
        .map(|(i, attrs)| {
            if attrs.len() != width {
                return Err(Error::invalid_input(format!(
                    "attribute vector {i} has length {}, expected {width}",
                    attrs.len()
                )));
            }
            Ok(attrs
                .iter()
                .map(|&b| if rng.random::<f64>() < mu { !b } else { b })
                .collect())
        })
        .collect()
}

/// Audit record of one run's corruption, serializable to a JSON sidecar.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct CorruptionSidecar {
    pub assignments: BTreeMap<String, LabelPair>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct LabelPair {
    pub clean: usize,
    pub noisy: usize,
}

impl CorruptionSidecar {
    pub fn from_labels(ids: &[String], clean: &[usize], noisy: &[usize]) -> Self {
        let assignments = ids
            .iter()
            .zip(clean.iter().zip(noisy))
            .map(|(id, (&clean, &noisy))| (id.clone(), LabelPair { clean, noisy }))
            .collect();
        CorruptionSidecar { assignments }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let data = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use ndarray::arr2;

    #[test]
    fn symmetric_matches_definition() {
        // c=8, mu=0.5: diagonal 0.5, off-diagonal 0.5/7
        let t = build_symmetric(8, 0.5).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let expected = if i == j { 0.5 } else { 0.5 / 7.0 };
                assert!((t.entries()[(i, j)] - expected).abs() < 1e-15);
            }
        }
        assert!(build_symmetric(3, 0.0).unwrap().is_identity());
        let t2 = build_symmetric(2, 0.25).unwrap();
        assert_eq!(t2.entries(), &arr2(&[[0.75, 0.25], [0.25, 0.75]]));
    }

    #[test]
    fn asymmetric_matches_definition() {
        // c=8, mu=0.45: row 7 wraps to column 0
        let t = build_asymmetric(8, 0.45).unwrap();
        assert!((t.entries()[(7, 0)] - 0.45).abs() < 1e-15);
        assert!((t.entries()[(7, 7)] - 0.55).abs() < 1e-15);
        assert_eq!(t.entries()[(7, 1)], 0.0);
        assert!(build_asymmetric(4, 0.0).unwrap().is_identity());
        let t2 = build_asymmetric(2, 0.3).unwrap();
        assert_eq!(t2.entries(), &arr2(&[[0.7, 0.3], [0.3, 0.7]]));
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(build_symmetric(1, 0.1).is_err());
        assert!(build_symmetric(3, -0.1).is_err());
        assert!(build_symmetric(3, 1.5).is_err());
        assert!(build_asymmetric(0, 0.5).is_err());
        assert!(NoiseSpec {
            kind: NoiseKind::None,
            rate: 0.2,
            num_domains: 3
        }
        .validate()
        .is_err());
    }

    #[test]
    fn rows_are_stochastic_for_grid_of_specs() {
        for c in [2, 3, 5, 8, 13] {
            for mu in [0.0, 0.15, 0.25, 0.3, 0.45, 0.5, 0.75, 1.0] {
                for t in [build_symmetric(c, mu).unwrap(), build_asymmetric(c, mu).unwrap()] {
                    for row in t.entries().rows() {
                        assert!((row.sum() - 1.0).abs() <= 1e-9);
                        assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
                    }
                }
            }
        }
    }

    #[test]
    fn corrupt_identity_is_noop_and_seeded_runs_agree() {
        let t = TransitionMatrix::identity(5).unwrap();
        let labels: Vec<usize> = (0..100).map(|i| i % 5).collect();
        let out = corrupt(&labels, &t, &mut stream(1, "corrupt", 0)).unwrap();
        assert_eq!(out, labels);

        let t = build_symmetric(5, 0.4).unwrap();
        let a = corrupt(&labels, &t, &mut stream(9, "corrupt", 0)).unwrap();
        let b = corrupt(&labels, &t, &mut stream(9, "corrupt", 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_rejects_out_of_range_labels() {
        let t = build_symmetric(3, 0.2).unwrap();
        assert!(corrupt(&[0, 1, 3], &t, &mut stream(0, "corrupt", 0)).is_err());
    }

    #[test]
    fn asymmetric_corruption_only_hits_next_class() {
        let t = build_asymmetric(5, 0.3).unwrap();
        let labels = vec![4usize; 1000];
        let out = corrupt(&labels, &t, &mut stream(3, "corrupt", 0)).unwrap();
        assert!(out.iter().all(|&y| y == 4 || y == 0));
        assert!(out.iter().any(|&y| y == 0));
    }

    /// Brute-force frequency oracle: empirical per-class flip frequencies over
    /// 1e5 samples must match the matrix entries within 3 standard errors.
    #[test]
    fn empirical_frequencies_match_transition_entries() {
        let n = 100_000usize;
        for (kind, mu) in [("sym", 0.5), ("asym", 0.3)] {
            let c = 8;
            let t = match kind {
                "sym" => build_symmetric(c, mu).unwrap(),
                _ => build_asymmetric(c, mu).unwrap(),
            };
            for clean in [0usize, c - 1] {
                let labels = vec![clean; n];
                let noisy = corrupt(&labels, &t, &mut stream(17, kind, clean as u64)).unwrap();
                let mut counts = vec![0usize; c];
                for &y in &noisy {
                    counts[y] += 1;
                }
                for j in 0..c {
                    let p = t.entries()[(clean, j)];
                    let se = (p * (1.0 - p) / n as f64).sqrt();
                    let freq = counts[j] as f64 / n as f64;
                    assert!(
                        (freq - p).abs() <= 3.0 * se + 1e-12,
                        "{kind} clean={clean} j={j}: freq {freq} vs p {p}"
                    );
                }
            }
        }
    }

    #[test]
    fn multilabel_flip_endpoints_and_rate() {
        let labels: Vec<Vec<bool>> = (0..100)
            .map(|i| (0..5).map(|j| (i + j) % 2 == 0).collect())
            .collect();
        let same = corrupt_multilabel(&labels, 0.0, &mut stream(0, "ml", 0)).unwrap();
        assert_eq!(same, labels);
        let flipped = corrupt_multilabel(&labels, 1.0, &mut stream(0, "ml", 0)).unwrap();
        for (orig, flip) in labels.iter().zip(&flipped) {
            assert!(orig.iter().zip(flip).all(|(a, b)| a != b));
        }

        // Monte-Carlo binomial check at mu = 0.3 over 1e5 bits
        let wide: Vec<Vec<bool>> = (0..1000).map(|_| vec![false; 100]).collect();
        let noisy = corrupt_multilabel(&wide, 0.3, &mut stream(5, "ml", 1)).unwrap();
        let flips: usize = noisy
            .iter()
            .map(|v| v.iter().filter(|&&b| b).count())
            .sum();
        let frac = flips as f64 / 100_000.0;
        assert!((0.29..=0.31).contains(&frac), "flip fraction {frac}");
    }

    #[test]
    fn multilabel_rejects_ragged_input() {
        let labels = vec![vec![true, false], vec![true]];
        assert!(corrupt_multilabel(&labels, 0.1, &mut stream(0, "ml", 2)).is_err());
    }

    #[test]
    fn sidecar_roundtrip() {
        let ids: Vec<String> = (0..4).map(|i| format!("s{i:03}")).collect();
        let sidecar = CorruptionSidecar::from_labels(&ids, &[0, 1, 2, 0], &[0, 2, 2, 1]);
        let dir = std::env::temp_dir().join("rmit-noise-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sidecar.json");
        sidecar.save(&path).unwrap();
        assert_eq!(CorruptionSidecar::load(&path).unwrap(), sidecar);
    }
}

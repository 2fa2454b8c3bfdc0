//! Desk-scale data: a deterministic synthetic multi-domain shape dataset and
//! a generic labeled image-folder loader, plus the horizontal-flip
//! augmentation and train/test split machinery.
//!
//! Domains are hue families (evenly spaced base hues with jitter); object
//! shape, position, scale, and background tone vary independently of the
//! domain. Translation is therefore well-posed: change the hue family, keep
//! everything else.

mod folder;
mod synthetic;

pub use folder::{export_image_folder, load_image_folder, FolderLoadStats};
pub use synthetic::{generate_synthetic, SyntheticShapesSpec};

use crate::error::{Error, Result};
use crate::noise::{corrupt, CorruptionSidecar, NoiseKind, NoiseSpec};
use crate::rng::stream;
use crate::scalar::Scalar;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One image with its clean and (possibly corrupted) domain labels.
/// Training code never sees `clean_label`; see [`TrainView`].
#[derive(Clone, Debug)]
pub struct LabeledSample {
    pub image: ArrayD<f32>,
    pub clean_label: usize,
    pub noisy_label: usize,
    pub sample_id: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub num_domains: usize,
    pub image_size: usize,
    pub image_channels: usize,
    pub domain_names: Vec<String>,
    samples: Vec<LabeledSample>,
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

/// Largest-remainder allocation of per-domain train counts so the global
/// train size is exactly floor(n * fraction) while staying stratified.
pub fn stratified_split_counts(domain_counts: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = domain_counts.iter().sum();
    let target = (total as f64 * fraction).floor() as usize;
    let mut base: Vec<usize> = domain_counts
        .iter()
        .map(|&n| (n as f64 * fraction).floor() as usize)
        .collect();
    let mut remainders: Vec<(usize, f64)> = domain_counts
        .iter()
        .enumerate()
        .map(|(i, &n)| (i, n as f64 * fraction - (n as f64 * fraction).floor()))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut short = target.saturating_sub(base.iter().sum::<usize>());
    for (i, _) in remainders {
        if short == 0 {
            break;
        }
        if base[i] < domain_counts[i] {
            base[i] += 1;
            short -= 1;
        }
    }
    base
}

impl Dataset {
    pub fn from_samples(
        samples: Vec<LabeledSample>,
        num_domains: usize,
        image_size: usize,
        image_channels: usize,
        domain_names: Vec<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid_input("dataset has no samples"));
        }
        Ok(Dataset {
            num_domains,
            image_size,
            image_channels,
            domain_names,
            samples,
            train_idx: Vec::new(),
            test_idx: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[LabeledSample] {
        &self.samples
    }

    /// Stratified split: per-domain counts by largest remainder, sample
    /// assignment shuffled by `seed`.
    pub fn split(&mut self, train_fraction: f64, seed: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::invalid_spec(format!(
                "train fraction {train_fraction} outside [0,1]"
            )));
        }
        let mut by_domain: Vec<Vec<usize>> = vec![Vec::new(); self.num_domains];
        for (i, s) in self.samples.iter().enumerate() {
            by_domain[s.clean_label].push(i);
        }
        let counts: Vec<usize> = by_domain.iter().map(|v| v.len()).collect();
        let train_counts = stratified_split_counts(&counts, train_fraction);
        self.train_idx.clear();
        self.test_idx.clear();
        let mut rng = stream(seed, "split", 0);
        for (domain, mut members) in by_domain.into_iter().enumerate() {
            use rand::seq::SliceRandom;
            members.shuffle(&mut rng);
            let k = train_counts[domain];
            self.train_idx.extend(&members[..k]);
            self.test_idx.extend(&members[k..]);
        }
        self.train_idx.sort_unstable();
        self.test_idx.sort_unstable();
        Ok(())
    }

    /// Corrupt the training labels once, per the noise spec. Test labels are
    /// left clean (they exist for evaluation only). Returns the audit record.
    pub fn corrupt_train(&mut self, noise: &NoiseSpec, seed: u64) -> Result<CorruptionSidecar> {
        noise.validate()?;
        if noise.kind == NoiseKind::PerAttributeFlip {
            return Err(Error::invalid_spec(
                "per-attribute corruption does not apply to categorical datasets",
            ));
        }
        let t = noise.transition_matrix()?;
        let clean: Vec<usize> = self
            .train_idx
            .iter()
            .map(|&i| self.samples[i].clean_label)
            .collect();
        let noisy = corrupt(&clean, &t, &mut stream(seed, "corrupt-train", 0))?;
        let ids: Vec<String> = self
            .train_idx
            .iter()
            .map(|&i| self.samples[i].sample_id.clone())
            .collect();
        for (&i, &y) in self.train_idx.iter().zip(&noisy) {
            self.samples[i].noisy_label = y;
        }
        Ok(CorruptionSidecar::from_labels(&ids, &clean, &noisy))
    }

    /// Training-side view: exposes noisy labels only.
    pub fn train_view(&self) -> TrainView<'_> {
        TrainView {
            dataset: self,
            indices: &self.train_idx,
        }
    }

    /// Evaluation-side view over the test split: clean and noisy labels.
    pub fn eval_view(&self) -> EvalView<'_> {
        EvalView {
            dataset: self,
            indices: &self.test_idx,
        }
    }

    /// Evaluation-side view over the training split (metrics against the
    /// training distribution, e.g. the real side of FID).
    pub fn eval_train_view(&self) -> EvalView<'_> {
        EvalView {
            dataset: self,
            indices: &self.train_idx,
        }
    }

    pub fn split_manifest(&self) -> SplitManifest {
        let mut assignment = BTreeMap::new();
        for &i in &self.train_idx {
            assignment.insert(self.samples[i].sample_id.clone(), Split::Train);
        }
        for &i in &self.test_idx {
            assignment.insert(self.samples[i].sample_id.clone(), Split::Test);
        }
        SplitManifest { assignment }
    }

    fn batch_images<T: Scalar>(&self, indices: &[usize]) -> ArrayD<T> {
        let (c, s) = (self.image_channels, self.image_size);
        let mut out = ArrayD::<T>::zeros(IxDyn(&[indices.len(), c, s, s]));
        for (row, &i) in indices.iter().enumerate() {
            let img = &self.samples[i].image;
            let mut slot = out.index_axis_mut(ndarray::Axis(0), row);
            slot.zip_mut_with(img, |o, &v| *o = T::from_f64(v as f64));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// sample_id -> split assignment, serializable as JSON.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct SplitManifest {
    pub assignment: BTreeMap<String, Split>,
}

impl SplitManifest {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// The training iterator's capability: images and noisy labels. Clean labels
/// are not reachable through this type.
#[derive(Clone, Copy)]
pub struct TrainView<'a> {
    dataset: &'a Dataset,
    indices: &'a [usize],
}

impl<'a> TrainView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Batch of images plus noisy labels for positions `rows` within this view.
    pub fn batch<T: Scalar>(&self, rows: &[usize]) -> (ArrayD<T>, Vec<usize>) {
        let indices: Vec<usize> = rows.iter().map(|&r| self.indices[r]).collect();
        let labels = indices
            .iter()
            .map(|&i| self.dataset.samples[i].noisy_label)
            .collect();
        (self.dataset.batch_images(&indices), labels)
    }

    pub fn noisy_labels(&self) -> Vec<usize> {
        self.indices
            .iter()
            .map(|&i| self.dataset.samples[i].noisy_label)
            .collect()
    }
}

/// Evaluation iterator: exposes both label kinds.
#[derive(Clone, Copy)]
pub struct EvalView<'a> {
    dataset: &'a Dataset,
    indices: &'a [usize],
}

impl<'a> EvalView<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn images<T: Scalar>(&self) -> ArrayD<T> {
        self.dataset.batch_images(self.indices)
    }

    pub fn batch<T: Scalar>(&self, rows: &[usize]) -> (ArrayD<T>, Vec<usize>, Vec<usize>) {
        let indices: Vec<usize> = rows.iter().map(|&r| self.indices[r]).collect();
        let clean = indices
            .iter()
            .map(|&i| self.dataset.samples[i].clean_label)
            .collect();
        let noisy = indices
            .iter()
            .map(|&i| self.dataset.samples[i].noisy_label)
            .collect();
        (self.dataset.batch_images(&indices), clean, noisy)
    }

    pub fn clean_labels(&self) -> Vec<usize> {
        self.indices
            .iter()
            .map(|&i| self.dataset.samples[i].clean_label)
            .collect()
    }

    pub fn sample_ids(&self) -> Vec<String> {
        self.indices
            .iter()
            .map(|&i| self.dataset.samples[i].sample_id.clone())
            .collect()
    }
}

/// Mirror each image in the batch left-right with probability `prob`;
/// labels are unaffected.
pub fn augment_hflip<T: Scalar>(batch: &ArrayD<T>, prob: f64, rng: &mut impl Rng) -> ArrayD<T> {
    let shape = batch.shape().to_vec();
    assert_eq!(shape.len(), 4, "augment_hflip expects NCHW");
    let mut out = batch.clone();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    for i in 0..n {
        if rng.random::<f64>() < prob {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w / 2 {
                        let a = out[IxDyn(&[i, ch, y, x])];
                        let b = out[IxDyn(&[i, ch, y, w - 1 - x])];
                        out[IxDyn(&[i, ch, y, x])] = b;
                        out[IxDyn(&[i, ch, y, w - 1 - x])] = a;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::networks::{SmallCnn, SmallCnnConfig};
use crate::nn::ParamStore;
use crate::robust::PeerClassifier;
use crate::rng::stream;
use crate::scalar::Scalar;
use ndarray::{Array2, ArrayD};
use rand::seq::SliceRandom;

/// The clean-trained evaluation classifier: scores translated images (CA),
/// supplies class probabilities (IS), and its pooled penultimate features
/// are the embedding space for FID/KID. Trained on clean labels, entirely
/// independent of any translation model.
pub struct EvalClassifier<T: Scalar> {
    inner: PeerClassifier<T>,
    trained: bool,
    pub train_accuracy: f64,
}

impl<T: Scalar> EvalClassifier<T> {
    /// Build with random weights and no training; every scoring entry point
    /// fails with a lifecycle error until trained.
    pub fn untrained(config: SmallCnnConfig, seed: u64) -> Result<Self> {
        let mut store = ParamStore::<T>::new();
        let net = SmallCnn::build(config, &mut store, &mut stream(seed, "eval-cls-init", 0))?;
        let adam = crate::nn::Adam::new(&store, 0.9, 0.999);
        Ok(EvalClassifier {
            inner: PeerClassifier { net, store, adam },
            trained: false,
            train_accuracy: 0.0,
        })
    }

    fn require_trained(&self) -> Result<()> {
        if !self.trained {
            return Err(Error::Lifecycle(
                "evaluation classifier has not been trained".to_string(),
            ));
        }
        Ok(())
    }

    pub fn config(&self) -> SmallCnnConfig {
        self.inner.net.config
    }

    pub fn predict(&self, images: &ArrayD<T>) -> Result<Vec<usize>> {
        self.require_trained()?;
        let logits = self.logits_matrix(images)?;
        Ok(argmax_rows(&logits))
    }

    /// Softmax class probabilities, (N, c) in f64.
    pub fn class_probs(&self, images: &ArrayD<T>) -> Result<Array2<f64>> {
        self.require_trained()?;
        let logits = self.logits_matrix(images)?;
        let mut out = logits;
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|v| (v - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        Ok(out)
    }

    /// Pooled penultimate features, (N, feature_dim) in f64.
    pub fn embed(&self, images: &ArrayD<T>) -> Result<Array2<f64>> {
        self.require_trained()?;
        let tape = crate::autodiff::Tape::new();
        let p = self.inner.store.bind_frozen(&tape);
        let feats = self
            .inner
            .net
            .features(&p, tape.constant(images.clone()))?
            .value();
        let feats = feats.into_dimensionality::<ndarray::Ix2>().unwrap();
        Ok(feats.mapv(|v| v.as_f64()))
    }

    pub fn accuracy(&self, images: &ArrayD<T>, labels: &[usize]) -> Result<f64> {
        self.require_trained()?;
        self.inner.accuracy(images, labels)
    }

    fn logits_matrix(&self, images: &ArrayD<T>) -> Result<Array2<f64>> {
        let tape = crate::autodiff::Tape::new();
        let p = self.inner.store.bind_frozen(&tape);
        let logits = self
            .inner
            .net
            .logits(&p, tape.constant(images.clone()))?
            .value();
        Ok(logits
            .into_dimensionality::<ndarray::Ix2>()
            .unwrap()
            .mapv(|v| v.as_f64()))
    }
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Train the evaluation classifier on the dataset's clean training labels.
pub fn train_eval_classifier<T: Scalar>(
    dataset: &Dataset,
    width: usize,
    epochs: usize,
    seed: u64,
) -> Result<EvalClassifier<T>> {
    let config = SmallCnnConfig {
        image_size: dataset.image_size,
        image_channels: dataset.image_channels,
        num_classes: dataset.num_domains,
        width,
    };
    let mut store = ParamStore::<T>::new();
    let net = SmallCnn::build(config, &mut store, &mut stream(seed, "eval-cls-init", 0))?;
    let adam = crate::nn::Adam::new(&store, 0.9, 0.999);
    let mut inner = PeerClassifier { net, store, adam };

    let view = dataset.eval_train_view();
    if view.is_empty() {
        return Err(Error::Lifecycle(
            "dataset has no training split; call split() first".to_string(),
        ));
    }
    let all_rows: Vec<usize> = (0..view.len()).collect();
    let (images, clean, _) = view.batch::<T>(&all_rows);

    let batch_size = 64.min(clean.len());
    let mut order: Vec<usize> = (0..clean.len()).collect();
    for epoch in 0..epochs {
        let mut rng = stream(seed, "eval-cls-epoch", epoch as u64);
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            inner.train_on_subset(&images, &clean, chunk, 1e-3)?;
        }
    }
    let train_accuracy = inner.accuracy(&images, &clean)?;
    Ok(EvalClassifier {
        inner,
        trained: true,
        train_accuracy,
    })
}

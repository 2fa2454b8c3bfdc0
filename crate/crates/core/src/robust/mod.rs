//! Label-noise robust classification: forward loss correction through a
//! known transition matrix, and co-teaching with cross-peer sample selection.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::losses::nll_from_logits;
use crate::networks::{SmallCnn, SmallCnnConfig};
use crate::nn::{Adam, ParamStore};
use crate::noise::TransitionMatrix;
use crate::scalar::Scalar;
use ndarray::ArrayD;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClsMethod {
    Naive,
    Forward,
    Coteaching,
}

/// Which robust-classification method the classifier term uses.
#[derive(Clone, Debug)]
pub struct RobustClsConfig {
    pub method: ClsMethod,
    /// Required for forward correction.
    pub transition: Option<TransitionMatrix>,
    /// Co-teaching drop rate tau, constant throughout training.
    pub drop_rate: f64,
}

impl RobustClsConfig {
    pub fn naive() -> Self {
        RobustClsConfig {
            method: ClsMethod::Naive,
            transition: None,
            drop_rate: 0.0,
        }
    }

    pub fn forward(t: TransitionMatrix) -> Self {
        RobustClsConfig {
            method: ClsMethod::Forward,
            transition: Some(t),
            drop_rate: 0.0,
        }
    }

    pub fn coteaching(drop_rate: f64) -> Self {
        RobustClsConfig {
            method: ClsMethod::Coteaching,
            transition: None,
            drop_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            ClsMethod::Forward if self.transition.is_none() => Err(Error::invalid_spec(
                "forward correction requires a transition matrix",
            )),
            ClsMethod::Coteaching if !(0.0..1.0).contains(&self.drop_rate) => Err(
                Error::invalid_spec(format!("drop rate {} outside [0,1)", self.drop_rate)),
            ),
            _ => Ok(()),
        }
    }
}

/// Forward-corrected classification loss plus how many corrected
/// probabilities hit the numerical floor.
pub struct ForwardLoss<'t, T: Scalar> {
    pub loss: Var<'t, T>,
    pub floored: usize,
}

const PROB_FLOOR: f64 = 1e-12;

/// `-log((T^t softmax(logits))[y_noisy])`, averaged over the batch: the
/// predicted clean distribution is pushed through the noise model before the
/// likelihood. An identity transition short-circuits to the plain
/// cross-entropy (bit-identical by construction).
pub fn forward_corrected_loss<'t, T: Scalar>(
    logits: Var<'t, T>,
    y_noisy: &[usize],
    t: &TransitionMatrix,
) -> Result<ForwardLoss<'t, T>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != y_noisy.len() {
        return Err(Error::invalid_input(format!(
            "logits {shape:?} do not match {} labels",
            y_noisy.len()
        )));
    }
    if shape[1] != t.num_classes() {
        return Err(Error::invalid_spec(format!(
            "transition matrix has {} classes but logits have {}",
            t.num_classes(),
            shape[1]
        )));
    }
    if t.is_identity() {
        return Ok(ForwardLoss {
            loss: nll_from_logits(logits, y_noisy)?,
            floored: 0,
        });
    }
    let tape = logits.tape();
    let t_const = tape.constant(t.entries().mapv(|v| T::from_f64(v)).into_dyn());
    // (T^t p)[j] = sum_i T_ij p_i, i.e. row-vector times T
    let corrected = logits.softmax().matmul(t_const);
    let picked = corrected.gather_cols(y_noisy);
    let floored = picked
        .value()
        .iter()
        .filter(|v| v.as_f64() < PROB_FLOOR)
        .count();
    let loss = picked
        .clamp_min(T::from_f64(PROB_FLOOR))
        .ln()
        .mean_all()
        .neg();
    Ok(ForwardLoss { loss, floored })
}

/// Cross-peer small-loss selection: peer B's losses pick the samples peer A
/// trains on, and vice versa. Keeps the ceil((1-tau)*B) smallest, ties broken
/// by lowest index.
pub fn coteach_select(
    losses_a: &[f64],
    losses_b: &[f64],
    tau: f64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if losses_a.is_empty() || losses_a.len() != losses_b.len() {
        return Err(Error::invalid_input(
            "co-teaching needs equal-length, nonempty loss vectors",
        ));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::invalid_spec(format!("drop rate {tau} outside [0,1)")));
    }
    let batch = losses_a.len();
    let keep = ((1.0 - tau) * batch as f64).ceil() as usize;
    Ok((
        smallest_k(losses_b, keep),
        smallest_k(losses_a, keep),
    ))
}

fn smallest_k(losses: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&i, &j| {
        losses[i]
            .partial_cmp(&losses[j])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut picked: Vec<usize> = order.into_iter().take(k).collect();
    picked.sort_unstable();
    picked
}

/// A standalone classifier with its own optimizer; the unit co-teaching runs
/// train two of these, and the trainer uses one as peer B next to the D/C
/// classifier head.
pub struct PeerClassifier<T: Scalar> {
    pub net: SmallCnn,
    pub store: ParamStore<T>,
    pub adam: Adam<T>,
}

impl<T: Scalar> PeerClassifier<T> {
    pub fn build(config: SmallCnnConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let net = SmallCnn::build(config, &mut store, rng)?;
        let adam = Adam::new(&store, 0.5, 0.999);
        Ok(PeerClassifier { net, store, adam })
    }

    /// Per-sample cross-entropy losses on a batch (no parameter update).
    pub fn per_sample_losses(&self, images: &ArrayD<T>, labels: &[usize]) -> Result<Vec<f64>> {
        let tape = Tape::new();
        let p = self.store.bind_frozen(&tape);
        let logits = self.net.logits(&p, tape.constant(images.clone()))?;
        let nll = logits.log_softmax().gather_cols(labels).neg();
        Ok(nll.value().iter().map(|v| v.as_f64()).collect())
    }

    /// One Adam step on the given subset; returns the subset's mean loss.
    pub fn train_on_subset(
        &mut self,
        images: &ArrayD<T>,
        labels: &[usize],
        subset: &[usize],
        lr: f64,
    ) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::invalid_input("empty co-teaching subset"));
        }
        let sub_images = select_batch(images, subset);
        let sub_labels: Vec<usize> = subset.iter().map(|&i| labels[i]).collect();
        let tape = Tape::new();
        let p = self.store.bind(&tape);
        let logits = self.net.logits(&p, tape.constant(sub_images))?;
        let loss = nll_from_logits(logits, &sub_labels)?;
        let value = loss.scalar().as_f64();
        let grads = tape.grad(loss, p.vars());
        let grads: Vec<_> = grads.into_iter().map(|g| g.map(|g| g.value())).collect();
        self.adam.step(&mut self.store, &grads, lr);
        Ok(value)
    }

    pub fn accuracy(&self, images: &ArrayD<T>, labels: &[usize]) -> Result<f64> {
        let tape = Tape::new();
        let p = self.store.bind_frozen(&tape);
        let logits = self.net.logits(&p, tape.constant(images.clone()))?.value();
        let logits = logits.into_dimensionality::<ndarray::Ix2>().unwrap();
        let mut hits = 0usize;
        for (row, &y) in logits.rows().into_iter().zip(labels) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            if best == y {
                hits += 1;
            }
        }
        Ok(hits as f64 / labels.len() as f64)
    }
}

pub fn select_batch<T: Scalar>(images: &ArrayD<T>, subset: &[usize]) -> ArrayD<T> {
    let views: Vec<_> = subset
        .iter()
        .map(|&i| images.index_axis(ndarray::Axis(0), i))
        .collect();
    ndarray::stack(ndarray::Axis(0), &views).unwrap()
}

/// Two independently initialized peers plus the selection schedule state.
pub struct CoteachingState<T: Scalar> {
    pub peer_a: PeerClassifier<T>,
    pub peer_b: PeerClassifier<T>,
    /// True when peer A is the D/C classifier head rather than a standalone
    /// network (the trainer's integration); the standalone pair used here
    /// keeps it false.
    pub shared_trunk: bool,
}

impl<T: Scalar> CoteachingState<T> {
    pub fn build(
        config: SmallCnnConfig,
        rng_a: &mut impl Rng,
        rng_b: &mut impl Rng,
    ) -> Result<Self> {
        Ok(CoteachingState {
            peer_a: PeerClassifier::build(config, rng_a)?,
            peer_b: PeerClassifier::build(config, rng_b)?,
            shared_trunk: false,
        })
    }
}

/// Outcome of one cross-update step.
pub struct CoteachOutcome {
    /// Mean selected-subset loss of peer A (the classifier facing the
    /// generator objectives).
    pub loss_a: f64,
    pub loss_b: f64,
    pub selected_a: Vec<usize>,
    pub selected_b: Vec<usize>,
}

/// One co-teaching step: each peer evaluates the batch, selects the other's
/// training subset, and both update on their partner-selected samples.
pub fn coteach_step<T: Scalar>(
    state: &mut CoteachingState<T>,
    images: &ArrayD<T>,
    labels: &[usize],
    tau: f64,
    lr: f64,
) -> Result<CoteachOutcome> {
    if images.shape()[0] != labels.len() || labels.is_empty() {
        return Err(Error::invalid_input(
            "co-teaching batch and labels must be nonempty and aligned",
        ));
    }
    let losses_a = state.peer_a.per_sample_losses(images, labels)?;
    let losses_b = state.peer_b.per_sample_losses(images, labels)?;
    let (selected_a, selected_b) = coteach_select(&losses_a, &losses_b, tau)?;
    let loss_a = state
        .peer_a
        .train_on_subset(images, labels, &selected_a, lr)?;
    let loss_b = state
        .peer_b
        .train_on_subset(images, labels, &selected_b, lr)?;
    Ok(CoteachOutcome {
        loss_a,
        loss_b,
        selected_a,
        selected_b,
    })
}

#[cfg(test)]
mod tests;

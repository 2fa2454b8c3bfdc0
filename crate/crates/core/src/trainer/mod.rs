//! The optimization loop: alternating D/C and G updates at a fixed ratio,
//! linear learning-rate decay, deterministic RNG streams, bit-exact
//! checkpoint/resume, and periodic evaluation producing score trajectories.

mod checkpoint;

pub use checkpoint::{CheckpointReader, CheckpointWriter};

use crate::autodiff::{Tape, Var};
use crate::datasets::{augment_hflip, Dataset};
use crate::error::{Error, Result};
use crate::losses::{
    adv_loss, cls_fake_loss, cls_real_loss, cycle_loss, dc_objective, d_prime_objective,
    gen_hook, generator_objective, identity_loss, net_hook, relabeled_cycle_loss,
    sample_targets, second_adv_loss, virtual_cycle_loss, GeneratorTerms, LossBundle,
    LossWeights, RelabelMode, Variant,
};
use crate::metrics::{
    classification_accuracy_with, fid, inception_score, kid, train_eval_classifier,
    EmbeddingSet, EmbeddingSource, EvalClassifier, MetricsReport, KID_DEFAULT_SPLITS,
    KID_DEFAULT_SPLIT_SIZE,
};
use crate::networks::{
    Conditioning, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig, SmallCnnConfig,
};
use crate::nn::{Adam, Mode, ParamStore};
use crate::noise::NoiseSpec;
use crate::robust::{coteach_select, forward_corrected_loss, ClsMethod, PeerClassifier};
use crate::rng::stream;
use crate::scalar::Scalar;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Everything a single training run depends on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub weights: LossWeights,
    pub cls_method: ClsMethod,
    pub relabel_mode: RelabelMode,
    pub noise: NoiseSpec,
    /// Co-teaching drop rate; by convention equal to the noise rate.
    pub tau: f64,
    pub epochs_flat: usize,
    pub epochs_decay: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub d_steps_per_g: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub gen: GeneratorConfig,
    pub disc: DiscriminatorConfig,
    pub hflip_prob: f64,
    pub eval_every_epochs: usize,
    pub cls_acc_every_iters: usize,
    pub checkpoint_every_epochs: usize,
    pub eval_cls_width: usize,
    pub eval_cls_epochs: usize,
}

impl TrainConfig {
    /// Desk-scale defaults with the standard optimization hyperparameters:
    /// Adam(0.5, 0.999) at 1e-4, five D/C updates per G update, batch 16,
    /// 20 flat + 20 decay epochs, evaluation every 5 epochs and classifier
    /// test accuracy every 100 iterations.
    pub fn desk_scale(variant: Variant, noise: NoiseSpec, seed: u64) -> Self {
        let mut weights = LossWeights::default();
        weights.use_adv2 = variant.uses_adv2();
        TrainConfig {
            variant,
            weights,
            cls_method: ClsMethod::Naive,
            relabel_mode: RelabelMode::Sample,
            tau: noise.rate,
            noise,
            epochs_flat: 20,
            epochs_decay: 20,
            lr: 1e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            d_steps_per_g: 5,
            batch_size: 16,
            seed,
            gen: GeneratorConfig::desk_scale(noise.num_domains),
            disc: DiscriminatorConfig::desk_scale(noise.num_domains),
            hflip_prob: 0.5,
            eval_every_epochs: 5,
            cls_acc_every_iters: 100,
            checkpoint_every_epochs: 10,
            eval_cls_width: 16,
            eval_cls_epochs: 60,
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_flat + self.epochs_decay
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.noise.validate()?;
        self.gen.validate()?;
        self.disc.validate()?;
        if self.d_steps_per_g == 0 {
            return Err(Error::invalid_spec("d_steps_per_g must be >= 1"));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::invalid_spec("lr must be > 0"));
        }
        if self.total_epochs() == 0 {
            return Err(Error::invalid_spec("need at least one epoch"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid_spec("batch_size must be >= 2"));
        }
        if self.cls_method == ClsMethod::Coteaching && !(0.0..1.0).contains(&self.tau) {
            return Err(Error::invalid_spec("co-teaching tau must be in [0,1)"));
        }
        if self.weights.use_adv2 != self.variant.uses_adv2() {
            return Err(Error::invalid_spec(
                "use_adv2 must match the variant's objective",
            ));
        }
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Learning rate at `epoch`: flat, then linear to zero at the schedule end.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.total_epochs() {
        return Err(Error::invalid_input(format!(
            "epoch {epoch} outside schedule of {} epochs",
            config.total_epochs()
        )));
    }
    if epoch < config.epochs_flat {
        Ok(config.lr)
    } else {
        let into_decay = (epoch - config.epochs_flat) as f64;
        Ok(config.lr * (1.0 - into_decay / config.epochs_decay as f64))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryPoint {
    pub step: u64,
    pub epoch: usize,
    pub metric: String,
    pub value: f64,
}

/// Time series of evaluation scores; step indices are monotone per metric.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct ScoreTrajectory {
    pub points: Vec<TrajectoryPoint>,
}

impl ScoreTrajectory {
    pub fn push(&mut self, step: u64, epoch: usize, metric: &str, value: f64) {
        if let Some(last) = self.points.iter().rev().find(|p| p.metric == metric) {
            assert!(last.step <= step, "trajectory steps must be monotone");
        }
        self.points.push(TrajectoryPoint {
            step,
            epoch,
            metric: metric.to_string(),
            value,
        });
    }

    pub fn series(&self, metric: &str) -> Vec<(u64, f64)> {
        self.points
            .iter()
            .filter(|p| p.metric == metric)
            .map(|p| (p.step, p.value))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub bundle: LossBundle,
    /// Forward-corrected probabilities that hit the numerical floor this step.
    pub floored: usize,
    /// Fraction of the batch the co-teaching selection kept (None otherwise).
    pub selected_fraction: Option<f64>,
}

/// Full recorded history of a run; stored in each checkpoint so a resumed
/// run reproduces the exact same files.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunHistory {
    pub train_log: Vec<TrainLogRow>,
    pub trajectory: ScoreTrajectory,
    pub reports: Vec<MetricsReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    epochs_completed: usize,
    step: u64,
    adam_t_g: u64,
    adam_t_d: u64,
    adam_t_d2: u64,
    adam_t_peer: u64,
    history: RunHistory,
}

/// Mutable state of one training run.
pub struct TrainState<T: Scalar> {
    pub config: TrainConfig,
    pub g_net: Generator,
    pub g_store: ParamStore<T>,
    pub g_opt: Adam<T>,
    pub d_net: Discriminator,
    pub d_store: ParamStore<T>,
    pub d_opt: Adam<T>,
    pub d2_net: Option<Discriminator>,
    pub d2_store: ParamStore<T>,
    pub d2_opt: Option<Adam<T>>,
    pub peer_b: Option<PeerClassifier<T>>,
    /// Global D/C step counter (one per `train_step` call).
    pub step: u64,
    pub epochs_completed: usize,
    pub history: RunHistory,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut g_store = ParamStore::new();
        let g_net = Generator::build(
            config.gen,
            &mut g_store,
            &mut stream(config.seed, "init-g", 0),
        )?;
        let g_opt = Adam::new(&g_store, config.adam_beta1, config.adam_beta2);

        let mut d_store = ParamStore::new();
        let d_net = Discriminator::build(
            config.disc,
            &mut d_store,
            &mut stream(config.seed, "init-d", 0),
        )?;
        let d_opt = Adam::new(&d_store, config.adam_beta1, config.adam_beta2);

        // The auxiliary discriminator reuses the architecture without the
        // classifier head, independently initialized.
        let mut d2_store = ParamStore::new();
        let (d2_net, d2_opt) = if config.variant.uses_adv2() {
            let mut d2_config = config.disc;
            d2_config.with_classifier = false;
            let net = Discriminator::build(
                d2_config,
                &mut d2_store,
                &mut stream(config.seed, "init-d2", 0),
            )?;
            let opt = Adam::new(&d2_store, config.adam_beta1, config.adam_beta2);
            (Some(net), Some(opt))
        } else {
            (None, None)
        };

        let peer_b = if config.cls_method == ClsMethod::Coteaching {
            Some(PeerClassifier::build(
                SmallCnnConfig {
                    image_size: config.gen.image_size,
                    image_channels: config.gen.image_channels,
                    num_classes: config.gen.num_domains,
                    width: config.eval_cls_width,
                },
                &mut stream(config.seed, "init-peer-b", 0),
            )?)
        } else {
            None
        };

        Ok(TrainState {
            config,
            g_net,
            g_store,
            g_opt,
            d_net,
            d_store,
            d_opt,
            d2_net,
            d2_store,
            d2_opt,
            peer_b,
            step: 0,
            epochs_completed: 0,
            history: RunHistory::default(),
        })
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut writer = CheckpointWriter::new();
        writer.add_store("g", &self.g_store, &self.g_opt);
        writer.add_store("d", &self.d_store, &self.d_opt);
        if let Some(opt) = &self.d2_opt {
            writer.add_store("d2", &self.d2_store, opt);
        }
        if let Some(peer) = &self.peer_b {
            writer.add_store("peerb", &peer.store, &peer.adam);
        }
        let manifest = Manifest {
            config_hash: self.config.config_hash(),
            epochs_completed: self.epochs_completed,
            step: self.step,
            adam_t_g: self.g_opt.t,
            adam_t_d: self.d_opt.t,
            adam_t_d2: self.d2_opt.as_ref().map(|o| o.t).unwrap_or(0),
            adam_t_peer: self.peer_b.as_ref().map(|p| p.adam.t).unwrap_or(0),
            history: self.history.clone(),
        };
        writer.write(path, &manifest)
    }

    pub fn load_checkpoint(config: TrainConfig, path: &Path) -> Result<Self> {
        let reader = CheckpointReader::<T>::read(path)?;
        let manifest: Manifest = reader.manifest()?;
        if manifest.config_hash != config.config_hash() {
            return Err(Error::Checkpoint(format!(
                "checkpoint was written by config {} but the current config hashes to {}",
                manifest.config_hash,
                config.config_hash()
            )));
        }
        let mut state = TrainState::new(config)?;
        reader.load_store("g", &mut state.g_store, &mut state.g_opt)?;
        reader.load_store("d", &mut state.d_store, &mut state.d_opt)?;
        state.g_opt.t = manifest.adam_t_g;
        state.d_opt.t = manifest.adam_t_d;
        if let Some(opt) = &mut state.d2_opt {
            reader.load_store("d2", &mut state.d2_store, opt)?;
            opt.t = manifest.adam_t_d2;
        }
        if let Some(peer) = &mut state.peer_b {
            reader.load_store("peerb", &mut peer.store, &mut peer.adam)?;
            peer.adam.t = manifest.adam_t_peer;
        }
        state.step = manifest.step;
        state.epochs_completed = manifest.epochs_completed;
        state.history = manifest.history;
        Ok(state)
    }

    fn num_domains(&self) -> usize {
        self.config.gen.num_domains
    }

    /// One D/C update (and D' update when the variant uses the second
    /// adversarial loss); every `d_steps_per_g`-th call also updates G.
    pub fn train_step(&mut self, images: &ArrayD<T>, y_noisy: &[usize]) -> Result<TrainLogRow> {
        let n = images.shape()[0];
        if n != y_noisy.len() || n == 0 {
            return Err(Error::invalid_input("batch and labels must align"));
        }
        let step = self.step;
        let seed = self.config.seed;
        let epoch = self.epochs_completed;
        let lr = lr_at(epoch.min(self.config.total_epochs() - 1), &self.config)?;
        let c = self.num_domains();
        let objective = self.config.weights.gan_objective;
        let gp_weight = self.config.weights.gp_weight;
        let mut bundle = LossBundle::default();
        let mut floored_total = 0usize;
        let mut selected_fraction = None;

        // both phases of one step sample target labels from the same streams
        let y_prime = sample_targets(c, n, &mut stream(seed, "targets-d", step));
        let y_dprime = sample_targets(c, n, &mut stream(seed, "targets2-d", step));

        // ---- D/C phase -----------------------------------------------------
        {
            let tape = Tape::new();
            let pg = self.g_store.bind_frozen(&tape);
            let pd = self.d_store.bind(&tape);
            let x = tape.constant(images.clone());
            let mut drop_rng = stream(seed, "drop-d", step);
            let mut gp_rng = stream(seed, "gp-d", step);

            let g_net = &self.g_net;
            let d_net = &self.d_net;
            let mut g_fn = gen_hook(|z, cond: &Conditioning| Ok(g_net.forward(&pg, z, cond)?.image()));
            let adv = {
                let d_fn = net_hook(|z| {
                    Ok(d_net
                        .forward(&pd, z, Mode::Train, &mut drop_rng)?
                        .realness_per_sample())
                });
                adv_loss(
                    x,
                    &Conditioning::Labels(y_prime.clone()),
                    &mut g_fn,
                    d_fn,
                    objective,
                    gp_weight,
                    &mut gp_rng,
                )?
            };

            // classification term on real images, per the configured method
            let logits = self
                .d_net
                .forward(&pd, x, Mode::Train, &mut drop_rng)?
                .logits()?;
            let cls_r = match self.config.cls_method {
                ClsMethod::Naive => crate::losses::nll_from_logits(logits, y_noisy)?,
                ClsMethod::Forward => {
                    let t = self.config.noise.transition_matrix()?;
                    let out = forward_corrected_loss(logits, y_noisy, &t)?;
                    floored_total += out.floored;
                    out.loss
                }
                ClsMethod::Coteaching => {
                    let peer = self.peer_b.as_mut().expect("peer built for co-teaching");
                    let per_sample = logits.log_softmax().gather_cols(y_noisy).neg();
                    let losses_a: Vec<f64> =
                        per_sample.value().iter().map(|v| v.as_f64()).collect();
                    let losses_b = peer.per_sample_losses(images, y_noisy)?;
                    let (for_a, for_b) = coteach_select(&losses_a, &losses_b, self.config.tau)?;
                    peer.train_on_subset(images, y_noisy, &for_b, lr)?;
                    // subset mean via a constant 0/1 mask
                    let mut mask = ArrayD::<T>::zeros(IxDyn(&[n, 1]));
                    for &i in &for_a {
                        mask[IxDyn(&[i, 0])] = T::one();
                    }
                    let mask = tape.constant(mask);
                    selected_fraction = Some(for_a.len() as f64 / n as f64);
                    per_sample
                        .mul(mask)
                        .sum_all()
                        .scale(T::from_f64(1.0 / for_a.len() as f64))
                }
            };

            let total_d = dc_objective(&self.config.weights, adv.d_term, cls_r)?;
            bundle.adv_d = Some(adv.d_term.scalar().as_f64());
            bundle.cls_r = Some(cls_r.scalar().as_f64());
            bundle.total_d = Some(total_d.scalar().as_f64());

            let grads = tape.grad(total_d, pd.vars());
            let grads: Vec<_> = grads.into_iter().map(|g| g.map(|g| g.value())).collect();
            self.d_opt.step(&mut self.d_store, &grads, lr);

            // auxiliary discriminator phase
            if let (Some(d2_net), Some(_)) = (&self.d2_net, &self.d2_opt) {
                let tape2 = Tape::new();
                let pg2 = self.g_store.bind_frozen(&tape2);
                let pd2 = self.d2_store.bind(&tape2);
                let x2 = tape2.constant(images.clone());
                let mut drop2 = stream(seed, "drop-d2", step);
                let mut gp2 = stream(seed, "gp-d2", step);
                let g_net = &self.g_net;
                let adv2 = second_adv_loss(
                    x2,
                    &Conditioning::Labels(y_prime.clone()),
                    &Conditioning::Labels(y_dprime.clone()),
                    gen_hook(|z, cond: &Conditioning| Ok(g_net.forward(&pg2, z, cond)?.image())),
                    net_hook(|z| {
                        Ok(d2_net
                            .forward(&pd2, z, Mode::Train, &mut drop2)?
                            .realness_per_sample())
                    }),
                    objective,
                    gp_weight,
                    &mut gp2,
                )?;
                let total_d2 = d_prime_objective(&self.config.weights, adv2.d_term)?;
                bundle.adv2_d = Some(adv2.d_term.scalar().as_f64());
                let grads = tape2.grad(total_d2, pd2.vars());
                let grads: Vec<_> = grads.into_iter().map(|g| g.map(|g| g.value())).collect();
                self.d2_opt
                    .as_mut()
                    .unwrap()
                    .step(&mut self.d2_store, &grads, lr);
            }
        }

        // ---- G phase (every d_steps_per_g-th call) --------------------------
        if (step + 1) % self.config.d_steps_per_g as u64 == 0 {
            let tape = Tape::new();
            let pg = self.g_store.bind(&tape);
            let pd = self.d_store.bind_frozen(&tape);
            let pd2 = self.d2_store.bind_frozen(&tape);
            let x = tape.constant(images.clone());
            let mut drop_rng = stream(seed, "drop-g", step);
            let mut gp_rng = stream(seed, "gp-g", step);
            let mut relabel_rng = stream(seed, "relabel", step);

            let yp = sample_targets(c, n, &mut stream(seed, "targets-g", step));
            let ypp = sample_targets(c, n, &mut stream(seed, "targets2-g", step));
            let yp_cond = Conditioning::Labels(yp.clone());
            let ypp_cond = Conditioning::Labels(ypp.clone());
            let y_noisy_cond = Conditioning::Labels(y_noisy.to_vec());

            let g_net = &self.g_net;
            let d_net = &self.d_net;
            let mut g_fn = gen_hook(|z, cond: &Conditioning| Ok(g_net.forward(&pg, z, cond)?.image()));

            // g_term only; the penalty is skipped at weight 0
            let adv = {
                let d_fn = net_hook(|z| {
                    Ok(d_net
                        .forward(&pd, z, Mode::Train, &mut drop_rng)?
                        .realness_per_sample())
                });
                adv_loss(x, &yp_cond, &mut g_fn, d_fn, objective, 0.0, &mut gp_rng)?
            };
            let cls_f = {
                let c_fn = net_hook(|z| {
                    d_net
                        .forward(&pd, z, Mode::Train, &mut drop_rng)?
                        .logits()
                });
                cls_fake_loss(x, &yp, &mut g_fn, c_fn)?
            };

            let cyc = if self.config.variant.needs_cyc() {
                Some(cycle_loss(x, &y_noisy_cond, &yp_cond, &mut g_fn)?)
            } else {
                None
            };
            let recyc = if self.config.variant.needs_recyc() {
                let c_fn = net_hook(|z| {
                    d_net
                        .forward(&pd, z, Mode::Train, &mut drop_rng)?
                        .logits()
                });
                Some(relabeled_cycle_loss(
                    x,
                    &yp_cond,
                    &mut g_fn,
                    c_fn,
                    self.config.relabel_mode,
                    &mut relabel_rng,
                )?)
            } else {
                None
            };
            let vcyc = if self.config.variant.needs_vcyc() {
                Some(virtual_cycle_loss(x, &yp_cond, &ypp_cond, &mut g_fn)?)
            } else {
                None
            };
            let adv2_g = if let Some(d2_net) = &self.d2_net {
                let mut drop2 = stream(seed, "drop-g-d2", step);
                let mut gp2 = stream(seed, "gp-g-d2", step);
                let terms = second_adv_loss(
                    x,
                    &yp_cond,
                    &ypp_cond,
                    &mut g_fn,
                    net_hook(|z| {
                        Ok(d2_net
                            .forward(&pd2, z, Mode::Train, &mut drop2)?
                            .realness_per_sample())
                    }),
                    objective,
                    0.0,
                    &mut gp2,
                )?;
                Some(terms.g_term)
            } else {
                None
            };
            let id = if self.config.weights.lambda_id > 0.0 {
                Some(identity_loss(x, &y_noisy_cond, &mut g_fn)?)
            } else {
                None
            };

            let terms = GeneratorTerms {
                adv_g: adv.g_term,
                cls_f,
                cyc,
                recyc,
                vcyc,
                adv2_g,
                id,
            };
            let total_g = generator_objective(self.config.variant, &self.config.weights, &terms)?;

            bundle.adv_g = Some(adv.g_term.scalar().as_f64());
            bundle.cls_f = Some(cls_f.scalar().as_f64());
            bundle.cyc = cyc.map(|v| v.scalar().as_f64());
            bundle.recyc = recyc.map(|v| v.scalar().as_f64());
            bundle.vcyc = vcyc.map(|v| v.scalar().as_f64());
            bundle.adv2_g = adv2_g.map(|v| v.scalar().as_f64());
            bundle.id = id.map(|v| v.scalar().as_f64());
            if let (Some(a), Some(b)) = (bundle.cyc.or(bundle.recyc), bundle.vcyc) {
                let alpha = self.config.weights.alpha;
                bundle.mixed = Some(alpha * a + (1.0 - alpha) * b);
            }
            bundle.total_g = Some(total_g.scalar().as_f64());

            let grads = tape.grad(total_g, pg.vars());
            let grads: Vec<_> = grads.into_iter().map(|g| g.map(|g| g.value())).collect();
            self.g_opt.step(&mut self.g_store, &grads, lr);
        }

        // non-finite losses abort with a diagnostic dump
        if bundle.validate_finite().is_err() {
            return Err(Error::Numerical(format!(
                "non-finite loss at step {step}; bundle: {}",
                serde_json::to_string(&bundle).unwrap_or_default()
            )));
        }

        self.step += 1;
        Ok(TrainLogRow {
            step,
            epoch,
            lr,
            bundle,
            floored: floored_total,
            selected_fraction,
        })
    }

    /// Translate a batch with the current generator (no grad bookkeeping kept).
    pub fn translate(&self, images: &ArrayD<T>, targets: &[usize]) -> Result<ArrayD<T>> {
        let tape = Tape::new();
        let pg = self.g_store.bind_frozen(&tape);
        let out = self
            .g_net
            .forward(
                &pg,
                tape.constant(images.clone()),
                &Conditioning::Labels(targets.to_vec()),
            )?
            .image()
            .value();
        Ok(out)
    }

    /// The D/C classifier head's accuracy on clean-labeled images.
    pub fn classifier_accuracy(&self, images: &ArrayD<T>, labels: &[usize]) -> Result<f64> {
        let tape = Tape::new();
        let pd = self.d_store.bind_frozen(&tape);
        let logits = self
            .d_net
            .forward(
                &pd,
                tape.constant(images.clone()),
                Mode::Eval,
                &mut stream(0, "unused", 0),
            )?
            .logits()?
            .value();
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

/// Output of a full training run.
pub struct RunArtifacts {
    pub history: RunHistory,
    pub final_checkpoint: PathBuf,
    pub eval_cls_train_accuracy: f64,
}

/// Execute the full schedule on an already-corrupted dataset, evaluating
/// CA/FID/IS/KID every `eval_every_epochs` epochs and the classifier's test
/// accuracy every `cls_acc_every_iters` iterations. Resumes from the latest
/// epoch checkpoint in `out_dir` when one matches the config hash.
pub fn run_training<T: Scalar>(
    config: &TrainConfig,
    dataset: &Dataset,
    out_dir: &Path,
) -> Result<RunArtifacts> {
    run_training_until::<T>(config, dataset, out_dir, None)
}

/// `run_training` with an optional interruption point: stop (checkpointing)
/// after `stop_after` epochs without writing the final artifacts. A later
/// call without the stop resumes and completes identically to an
/// uninterrupted run.
pub fn run_training_until<T: Scalar>(
    config: &TrainConfig,
    dataset: &Dataset,
    out_dir: &Path,
    stop_after: Option<usize>,
) -> Result<RunArtifacts> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let train = dataset.train_view();
    if train.len() < config.batch_size {
        return Err(Error::invalid_input(format!(
            "training split of {} samples is smaller than one batch",
            train.len()
        )));
    }

    // evaluation classifier: clean-trained, independent of the translator
    let eval_cls = train_eval_classifier::<T>(
        dataset,
        config.eval_cls_width,
        config.eval_cls_epochs,
        config.seed ^ 0x5eed_c1a5,
    )?;

    let latest = find_latest_checkpoint(out_dir, config)?;
    let mut state = match latest {
        Some((path, _epoch)) => TrainState::<T>::load_checkpoint(config.clone(), &path)?,
        None => TrainState::<T>::new(config.clone())?,
    };

    let steps_per_epoch = train.len() / config.batch_size;
    let test = dataset.eval_view();
    let test_rows: Vec<usize> = (0..test.len()).collect();
    let (test_images, test_clean, _) = test.batch::<T>(&test_rows);

    let target_epochs = stop_after
        .unwrap_or(config.total_epochs())
        .min(config.total_epochs());
    while state.epochs_completed < target_epochs {
        let epoch = state.epochs_completed;
        let mut order: Vec<usize> = (0..train.len()).collect();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut stream(config.seed, "shuffle", epoch as u64));
        }
        for batch_idx in 0..steps_per_epoch {
            let rows = &order[batch_idx * config.batch_size..(batch_idx + 1) * config.batch_size];
            let (images, labels) = train.batch::<T>(rows);
            let images = augment_hflip(
                &images,
                config.hflip_prob,
                &mut stream(config.seed, "hflip", state.step),
            );
            let row = state.train_step(&images, &labels)?;
            let global_step = row.step;
            state.history.train_log.push(row);

            if (global_step + 1) % config.cls_acc_every_iters as u64 == 0 {
                let acc = state.classifier_accuracy(&test_images, &test_clean)?;
                state
                    .history
                    .trajectory
                    .push(global_step + 1, epoch, "cls_test_acc", 100.0 * acc);
                if let Some(peer) = &state.peer_b {
                    let acc = peer.accuracy(&test_images, &test_clean)?;
                    state
                        .history
                        .trajectory
                        .push(global_step + 1, epoch, "peer_b_test_acc", 100.0 * acc);
                }
            }
        }
        state.epochs_completed += 1;

        if config.cls_method == ClsMethod::Coteaching {
            let fractions: Vec<f64> = state
                .history
                .train_log
                .iter()
                .filter(|r| r.epoch == epoch)
                .filter_map(|r| r.selected_fraction)
                .collect();
            if !fractions.is_empty() {
                let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
                let step = state.step;
                state
                    .history
                    .trajectory
                    .push(step, epoch, "coteach_selected_fraction", mean);
            }
        }

        if state.epochs_completed % config.eval_every_epochs == 0
            || state.epochs_completed == config.total_epochs()
        {
            let report = evaluate_epoch(&state, dataset, &eval_cls)?;
            let step = state.step;
            state
                .history
                .trajectory
                .push(step, state.epochs_completed, "ca", report.ca);
            state
                .history
                .trajectory
                .push(step, state.epochs_completed, "fid", report.fid);
            state.history.reports.push(report);
        }

        if state.epochs_completed % config.checkpoint_every_epochs == 0
            || state.epochs_completed == config.total_epochs()
            || state.epochs_completed == target_epochs
        {
            let path = out_dir.join(format!("epoch_{:04}.ckpt", state.epochs_completed));
            state.save_checkpoint(&path)?;
        }
    }

    if state.epochs_completed < config.total_epochs() {
        // interrupted: leave only the epoch checkpoints behind
        let last = out_dir.join(format!("epoch_{:04}.ckpt", state.epochs_completed));
        return Ok(RunArtifacts {
            history: state.history.clone(),
            final_checkpoint: last,
            eval_cls_train_accuracy: eval_cls.train_accuracy,
        });
    }

    let final_path = out_dir.join("final.ckpt");
    state.save_checkpoint(&final_path)?;
    write_jsonl(
        &out_dir.join("train_log.jsonl"),
        state.history.train_log.iter(),
    )?;
    write_jsonl(
        &out_dir.join("trajectory.jsonl"),
        state.history.trajectory.points.iter(),
    )?;
    write_jsonl(&out_dir.join("metrics.jsonl"), state.history.reports.iter())?;

    Ok(RunArtifacts {
        history: state.history.clone(),
        final_checkpoint: final_path,
        eval_cls_train_accuracy: eval_cls.train_accuracy,
    })
}

fn write_jsonl<'a, I, S>(path: &Path, rows: I) -> Result<()>
where
    I: Iterator<Item = &'a S>,
    S: Serialize + 'a,
{
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn find_latest_checkpoint(out_dir: &Path, config: &TrainConfig) -> Result<Option<(PathBuf, usize)>> {
    let mut best: Option<(PathBuf, usize)> = None;
    if let Ok(entries) = std::fs::read_dir(out_dir) {
        for entry in entries.filter_map(|e| e.ok()) {
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(epoch_str) = name
                .strip_prefix("epoch_")
                .and_then(|s| s.strip_suffix(".ckpt"))
            {
                if let Ok(epoch) = epoch_str.parse::<usize>() {
                    if best.as_ref().map(|(_, e)| epoch > *e).unwrap_or(true) {
                        best = Some((entry.path(), epoch));
                    }
                }
            }
        }
    }
    // only resume from checkpoints of this exact config
    if let Some((path, epoch)) = &best {
        match checkpoint::read_manifest::<Manifest>(path) {
            Ok(manifest) if manifest.config_hash == config.config_hash() => {
                return Ok(Some((path.clone(), *epoch)));
            }
            _ => return Ok(None),
        }
    }
    Ok(None)
}

/// CA/FID/IS/KID for the current generator snapshot.
fn evaluate_epoch<T: Scalar>(
    state: &TrainState<T>,
    dataset: &Dataset,
    eval_cls: &EvalClassifier<T>,
) -> Result<MetricsReport> {
    let config = &state.config;
    let epoch = state.epochs_completed;
    let test = dataset.eval_view();
    let rows: Vec<usize> = (0..test.len()).collect();
    let (test_images, test_clean, _) = test.batch::<T>(&rows);

    // CA: translate to a uniformly-chosen different domain
    let ca = classification_accuracy_with(
        &test_images,
        &test_clean,
        config.gen.num_domains,
        |imgs, targets| state.translate(imgs, targets),
        |imgs| eval_cls.predict(imgs),
        &mut stream(config.seed, "eval-ca", epoch as u64),
    )?;

    // FID protocol: translate each test image using the label of another
    // (seeded random permutation), compare against all real training images
    let mut perm: Vec<usize> = (0..test.len()).collect();
    {
        use rand::seq::SliceRandom;
        perm.shuffle(&mut stream(config.seed, "eval-fid-pairing", epoch as u64));
    }
    let targets: Vec<usize> = perm.iter().map(|&j| test_clean[j]).collect();
    let generated = state.translate(&test_images, &targets)?;

    let train_view = dataset.eval_train_view();
    let train_rows: Vec<usize> = (0..train_view.len()).collect();
    let (train_images, _, _) = train_view.batch::<T>(&train_rows);
    let real_emb = EmbeddingSet::new(eval_cls.embed(&train_images)?, EmbeddingSource::RealTrain)?;
    let gen_emb = EmbeddingSet::new(eval_cls.embed(&generated)?, EmbeddingSource::Generated)?;
    let fid_value = fid(&real_emb, &gen_emb)?;

    let is_score = inception_score(&eval_cls.class_probs(&generated)?)?;

    let split_size = KID_DEFAULT_SPLIT_SIZE.min(gen_emb.len()).min(real_emb.len());
    let (kid_value, kid_splits) = kid(
        &real_emb,
        &gen_emb,
        KID_DEFAULT_SPLITS,
        split_size,
        &mut stream(config.seed, "eval-kid", epoch as u64),
    )?;

    let report = MetricsReport {
        epoch,
        ca,
        fid: fid_value,
        is_score,
        kid: kid_value,
        kid_splits,
    };
    report.validate(config.gen.num_domains)?;
    Ok(report)
}

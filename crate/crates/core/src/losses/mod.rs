//! The objective family: adversarial, classification, and the cycle-consistency
//! variants (standard, virtual, relabeled, mixed), the second adversarial loss,
//! and the identity mapping loss, composed per model variant.
//!
//! Loss functions take the networks as closures `(image, conditioning) -> image`
//! / `image -> scores`, so unit tests can substitute stubs (identity generator,
//! constant discriminator) and the trainer can bind real networks.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::networks::Conditioning;
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanObjective {
    /// The log-likelihood form: D maximizes E[log D(x)] + E[log(1-D(G))].
    Vanilla,
    /// Critic difference with a gradient penalty on interpolates.
    WganGp,
}

/// Trade-off weights of the full objective.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_cyc: f64,
    /// Mixture rate between the base cycle term and the virtual cycle term.
    pub alpha: f64,
    pub lambda_id: f64,
    pub gan_objective: GanObjective,
    pub gp_weight: f64,
    pub use_adv2: bool,
}

impl Default for LossWeights {
    /// The standard setting: lambda_cls = 1, lambda_cyc = 10, alpha = 0.5,
    /// improved objective with penalty weight 10.
    fn default() -> Self {
        LossWeights {
            lambda_cls: 1.0,
            lambda_cyc: 10.0,
            alpha: 0.5,
            lambda_id: 0.0,
            gan_objective: GanObjective::WganGp,
            gp_weight: 10.0,
            use_adv2: false,
        }
    }
}

impl LossWeights {
    /// The grayscale 48px setting, which adds the identity mapping loss at
    /// weight 5.
    pub fn with_identity() -> Self {
        LossWeights {
            lambda_id: 5.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid_spec(format!(
                "alpha {} outside [0,1]",
                self.alpha
            )));
        }
        for (name, v) in [
            ("lambda_cls", self.lambda_cls),
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_id", self.lambda_id),
            ("gp_weight", self.gp_weight),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::invalid_spec(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// The six compared model variants (rows of the model-objective matrix).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "stargan")]
    StarGan,
    #[serde(rename = "stargan_recyc")]
    StarGanRecyc,
    #[serde(rename = "rmit")]
    Rmit,
    #[serde(rename = "rmit_cyc_vcyc")]
    RmitCycVcyc,
    #[serde(rename = "rmit_recyc_vcyc")]
    RmitRecycVcyc,
    #[serde(rename = "rmit_adv2")]
    RmitAdv2,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::StarGan,
        Variant::StarGanRecyc,
        Variant::Rmit,
        Variant::RmitCycVcyc,
        Variant::RmitRecycVcyc,
        Variant::RmitAdv2,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::StarGan => "StarGAN",
            Variant::StarGanRecyc => "StarGAN_recyc",
            Variant::Rmit => "RMIT",
            Variant::RmitCycVcyc => "RMIT_cyc-vcyc",
            Variant::RmitRecycVcyc => "RMIT_recyc-vcyc",
            Variant::RmitAdv2 => "RMIT_adv2",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid_spec(format!("unknown model variant: {s}")))
    }

    /// Which cycle terms this variant's generator objective consumes.
    pub fn needs_cyc(&self) -> bool {
        matches!(self, Variant::StarGan | Variant::RmitCycVcyc)
    }

    pub fn needs_recyc(&self) -> bool {
        matches!(self, Variant::StarGanRecyc | Variant::RmitRecycVcyc)
    }

    pub fn needs_vcyc(&self) -> bool {
        matches!(
            self,
            Variant::Rmit | Variant::RmitCycVcyc | Variant::RmitRecycVcyc | Variant::RmitAdv2
        )
    }

    pub fn uses_adv2(&self) -> bool {
        matches!(self, Variant::RmitAdv2)
    }

    /// The generator-objective row of the model matrix, rendered symbolically.
    pub fn generator_objective(&self) -> String {
        let cyc = match self {
            Variant::StarGan => "L_cyc".to_string(),
            Variant::StarGanRecyc => "L_recyc".to_string(),
            Variant::Rmit | Variant::RmitAdv2 => "L_vcyc".to_string(),
            Variant::RmitCycVcyc => "(a L_cyc + (1 - a) L_vcyc)".to_string(),
            Variant::RmitRecycVcyc => "(a L_recyc + (1 - a) L_vcyc)".to_string(),
        };
        let mut row = format!("L_adv + l_cls L_cls^f + l_cyc {cyc}");
        if self.uses_adv2() {
            row.push_str(" + L_adv2");
        }
        row
    }
}

/// Per-step record of every computed term; all entries finite scalars.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LossBundle {
    pub adv_d: Option<f64>,
    pub adv_g: Option<f64>,
    pub cls_r: Option<f64>,
    pub cls_f: Option<f64>,
    pub cyc: Option<f64>,
    pub vcyc: Option<f64>,
    pub recyc: Option<f64>,
    pub mixed: Option<f64>,
    pub adv2_d: Option<f64>,
    pub adv2_g: Option<f64>,
    pub id: Option<f64>,
    pub total_d: Option<f64>,
    pub total_g: Option<f64>,
}

impl LossBundle {
    pub fn terms(&self) -> Vec<(&'static str, f64)> {
        [
            ("adv_d", self.adv_d),
            ("adv_g", self.adv_g),
            ("cls_r", self.cls_r),
            ("cls_f", self.cls_f),
            ("cyc", self.cyc),
            ("vcyc", self.vcyc),
            ("recyc", self.recyc),
            ("mixed", self.mixed),
            ("adv2_d", self.adv2_d),
            ("adv2_g", self.adv2_g),
            ("id", self.id),
            ("total_d", self.total_d),
            ("total_g", self.total_g),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    pub fn validate_finite(&self) -> Result<()> {
        for (name, value) in self.terms() {
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss term {name} is not finite: {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Draw target labels from the categorical prior Cat(K=c, p=1/c).
pub fn sample_targets(c: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..c)).collect()
}

/// Pin a closure to the generator-hook shape `(image, conditioning) -> image`.
/// Purely an inference aid; returns its argument.
pub fn gen_hook<'t, T, F>(f: F) -> F
where
    T: Scalar,
    F: FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
{
    f
}

/// Pin a closure to the score-hook shape `image -> scores` (a discriminator's
/// per-sample realness or a classifier's logits).
pub fn net_hook<'t, T, F>(f: F) -> F
where
    T: Scalar,
    F: FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
{
    f
}

/// Both adversarial terms for one batch. `d_term` is what the
/// discriminator's optimizer sees (after the sign handling in
/// [`dc_objective`]); `g_term` is the generator-side term.
pub struct AdvTerms<'t, T: Scalar> {
    pub d_term: Var<'t, T>,
    pub g_term: Var<'t, T>,
}

fn require_nonempty<T: Scalar>(x: Var<'_, T>) -> Result<()> {
    let shape = x.shape();
    if shape.is_empty() || shape[0] == 0 {
        return Err(Error::invalid_input("empty batch".to_string()));
    }
    Ok(())
}

/// Adversarial loss of the translated batch G(x, y').
///
/// Vanilla: `d_term = g_term = E[log D(x)] + E[log(1 - D(G(x,y')))]`
/// (the discriminator maximizes it, the generator minimizes it).
/// WGAN-GP: `d_term = E[D(fake)] - E[D(real)] + gp_weight * penalty` (the
/// discriminator minimizes it) and `g_term = -E[D(fake)]`.
#[allow(clippy::too_many_arguments)]
pub fn adv_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_prime: &Conditioning,
    mut g: impl FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
    d: impl FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
    objective: GanObjective,
    gp_weight: f64,
    rng: &mut impl Rng,
) -> Result<AdvTerms<'t, T>> {
    require_nonempty(x)?;
    let fake = g(x, y_prime)?;
    adv_terms_for_fake(x, fake, d, objective, gp_weight, rng)
}

/// Shared core of `adv_loss` and `second_adv_loss`: the adversarial terms
/// for an already-generated fake batch.
fn adv_terms_for_fake<'t, T: Scalar>(
    x: Var<'t, T>,
    fake: Var<'t, T>,
    mut d: impl FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
    objective: GanObjective,
    gp_weight: f64,
    rng: &mut impl Rng,
) -> Result<AdvTerms<'t, T>> {
    let d_real = d(x)?;
    let d_fake = d(fake)?;
    match objective {
        GanObjective::Vanilla => {
            // log D = -softplus(-s), log(1 - D) = -softplus(s) for logits s
            let real_term = d_real.neg().softplus().neg().mean_all();
            let fake_term = d_fake.softplus().neg().mean_all();
            let adv = real_term + fake_term;
            Ok(AdvTerms {
                d_term: adv,
                g_term: adv,
            })
        }
        GanObjective::WganGp => {
            let mean_real = d_real.mean_all();
            let mean_fake = d_fake.mean_all();
            let penalty = gradient_penalty(x, fake, &mut d, rng)?;
            let d_term =
                mean_fake.sub(mean_real) + penalty.scale(T::from_f64(gp_weight));
            let g_term = mean_fake.neg();
            Ok(AdvTerms { d_term, g_term })
        }
    }
}

/// `E[(||grad_xhat D(xhat)||_2 - 1)^2]` on per-sample interpolates
/// `xhat = eps * x + (1 - eps) * fake`.
pub fn gradient_penalty<'t, T: Scalar>(
    x: Var<'t, T>,
    fake: Var<'t, T>,
    mut d: impl FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
    rng: &mut impl Rng,
) -> Result<Var<'t, T>> {
    let tape = x.tape();
    let shape = x.shape();
    let n = shape[0];
    let x_arr = x.value();
    let fake_arr = fake.value();
    let mut xhat_arr = x_arr.clone();
    // sample-wise interpolation factor
    for i in 0..n {
        let eps = T::from_f64(rng.random::<f64>());
        let one_minus = T::one() - eps;
        let mut row = xhat_arr.index_axis_mut(ndarray::Axis(0), i);
        let f = fake_arr.index_axis(ndarray::Axis(0), i);
        row.zip_mut_with(&f, |a, &b| *a = eps * *a + one_minus * b);
    }
    let xhat = tape.param(xhat_arr);
    let scores = d(xhat)?;
    // sum over samples so that grad rows are per-sample input gradients
    let total = scores.sum_all();
    let grad = tape
        .grad(total, &[xhat])
        .pop()
        .flatten()
        .ok_or_else(|| Error::Numerical("no gradient on interpolates".to_string()))?;
    let mut reduced_shape = vec![n];
    reduced_shape.extend(std::iter::repeat(1).take(shape.len() - 1));
    let sq_norm = grad.sqr().sum_to(&reduced_shape);
    let norm = sq_norm.add_scalar(T::from_f64(1e-12)).sqrt();
    Ok(norm.add_scalar(-T::one()).sqr().mean_all())
}

/// Mean negative log-likelihood of the labels under row-softmax logits.
pub fn nll_from_logits<'t, T: Scalar>(logits: Var<'t, T>, labels: &[usize]) -> Result<Var<'t, T>> {
    require_nonempty(logits)?;
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::invalid_input(format!(
            "logits {shape:?} do not match {} labels",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= shape[1]) {
        return Err(Error::invalid_input(format!(
            "label {bad} out of range for {} classes",
            shape[1]
        )));
    }
    if !logits.value().iter().all(|v| v.as_f64().is_finite()) {
        return Err(Error::Numerical("non-finite logits".to_string()));
    }
    Ok(logits.log_softmax().gather_cols(labels).mean_all().neg())
}

/// Classification loss of real images: `E[-log C(y_noisy | x)]`.
pub fn cls_real_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_noisy: &[usize],
    mut c: impl FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    nll_from_logits(c(x)?, y_noisy)
}

/// Classification loss of generated images: `E[-log C(y' | G(x, y'))]`.
pub fn cls_fake_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_prime: &[usize],
    mut g: impl FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
    c: impl FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    let fake = g(x, &Conditioning::Labels(y_prime.to_vec()))?;
    cls_real_loss(fake, y_prime, c)
}

fn mean_l1<'t, T: Scalar>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    if a.shape() != b.shape() {
        return Err(Error::invalid_input(format!(
            "shape mismatch in L1: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.sub(b).abs().mean_all())
}

/// Cycle consistency from real data: `E[||x - G(G(x,y'), y_noisy)||_1]`.
pub fn cycle_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_noisy: &Conditioning,
    y_prime: &Conditioning,
    mut g: impl FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    require_nonempty(x)?;
    let fake = g(x, y_prime)?;
    let reconstructed = g(fake, y_noisy)?;
    mean_l1(x, reconstructed)
}

/// Virtual cycle consistency among generated images only:
/// `E[||G(x,y') - G(G(G(x,y'), y''), y')||_1]`. Takes no training label.
pub fn virtual_cycle_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_prime: &Conditioning,
    y_dprime: &Conditioning,
    mut g: impl FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    require_nonempty(x)?;
    let first = g(x, y_prime)?;
    let second = g(first, y_dprime)?;
    let reconstructed = g(second, y_prime)?;
    mean_l1(first, reconstructed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelabelMode {
    /// Draw the reconstruction label from C(y|x) (the default, matching the
    /// loss definition).
    Sample,
    /// Use argmax_y C(y|x).
    Argmax,
}

/// Relabeled cycle consistency: the reconstruction label comes from the
/// classifier instead of the annotation. Labels are discrete draws, so no
/// gradient flows into the classifier here.
pub fn relabeled_cycle_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_prime: &Conditioning,
    g: impl FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
    mut c: impl FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
    mode: RelabelMode,
    rng: &mut impl Rng,
) -> Result<Var<'t, T>> {
    require_nonempty(x)?;
    let probs = c(x)?.softmax().value();
    let probs = probs.into_dimensionality::<ndarray::Ix2>().map_err(|_| {
        Error::invalid_input("classifier must produce (N,c) logits".to_string())
    })?;
    let relabels: Vec<usize> = probs
        .rows()
        .into_iter()
        .map(|row| match mode {
            RelabelMode::Argmax => {
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                best
            }
            RelabelMode::Sample => {
                let u = T::from_f64(rng.random::<f64>());
                let mut acc = T::zero();
                let mut pick = row.len() - 1;
                for (j, &p) in row.iter().enumerate() {
                    acc = acc + p;
                    if u < acc {
                        pick = j;
                        break;
                    }
                }
                pick
            }
        })
        .collect();
    cycle_loss(x, &Conditioning::Labels(relabels), y_prime, g)
}

/// `alpha * base + (1 - alpha) * vcyc` (the mixing loss).
pub fn mixed_cycle_loss<'t, T: Scalar>(
    base: Var<'t, T>,
    vcyc: Var<'t, T>,
    alpha: f64,
) -> Result<Var<'t, T>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid_spec(format!("alpha {alpha} outside [0,1]")));
    }
    Ok(base.scale(T::from_f64(alpha)) + vcyc.scale(T::from_f64(1.0 - alpha)))
}

/// Second adversarial loss: realness of the twice-converted image
/// `G(G(x,y'), y'')` under the auxiliary discriminator.
#[allow(clippy::too_many_arguments)]
pub fn second_adv_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_prime: &Conditioning,
    y_dprime: &Conditioning,
    mut g: impl FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
    d_prime: impl FnMut(Var<'t, T>) -> Result<Var<'t, T>>,
    objective: GanObjective,
    gp_weight: f64,
    rng: &mut impl Rng,
) -> Result<AdvTerms<'t, T>> {
    require_nonempty(x)?;
    let first = g(x, y_prime)?;
    let twice = g(first, y_dprime)?;
    adv_terms_for_fake(x, twice, d_prime, objective, gp_weight, rng)
}

/// Identity mapping loss: `E[||G(x, y_self) - x||_1]` with the sample's own
/// (noisy) label.
pub fn identity_loss<'t, T: Scalar>(
    x: Var<'t, T>,
    y_self: &Conditioning,
    mut g: impl FnMut(Var<'t, T>, &Conditioning) -> Result<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    require_nonempty(x)?;
    let same = g(x, y_self)?;
    mean_l1(same, x)
}

/// Anything the objective composition can weigh and add: loss values for
/// reports, tape nodes for training.
pub trait LossTerm: Copy {
    fn weighted(self, w: f64) -> Self;
    fn plus(self, other: Self) -> Self;
}

impl LossTerm for f64 {
    fn weighted(self, w: f64) -> Self {
        self * w
    }
    fn plus(self, other: Self) -> Self {
        self + other
    }
}

impl<'t, T: Scalar> LossTerm for Var<'t, T> {
    fn weighted(self, w: f64) -> Self {
        self.scale(T::from_f64(w))
    }
    fn plus(self, other: Self) -> Self {
        self.add(other)
    }
}

/// Terms feeding the generator objective of one variant.
#[derive(Clone, Copy)]
pub struct GeneratorTerms<V> {
    pub adv_g: V,
    pub cls_f: V,
    pub cyc: Option<V>,
    pub recyc: Option<V>,
    pub vcyc: Option<V>,
    pub adv2_g: Option<V>,
    pub id: Option<V>,
}

fn missing(term: &str, variant: Variant) -> Error {
    Error::invalid_input(format!("{} requires the {term} term", variant.name()))
}

/// Compose the generator objective row of the model matrix.
pub fn generator_objective<V: LossTerm>(
    variant: Variant,
    weights: &LossWeights,
    terms: &GeneratorTerms<V>,
) -> Result<V> {
    weights.validate()?;
    let cyc_term = match variant {
        Variant::StarGan => terms.cyc.ok_or_else(|| missing("cyc", variant))?,
        Variant::StarGanRecyc => terms.recyc.ok_or_else(|| missing("recyc", variant))?,
        Variant::Rmit | Variant::RmitAdv2 => {
            terms.vcyc.ok_or_else(|| missing("vcyc", variant))?
        }
        Variant::RmitCycVcyc => {
            let cyc = terms.cyc.ok_or_else(|| missing("cyc", variant))?;
            let vcyc = terms.vcyc.ok_or_else(|| missing("vcyc", variant))?;
            cyc.weighted(weights.alpha)
                .plus(vcyc.weighted(1.0 - weights.alpha))
        }
        Variant::RmitRecycVcyc => {
            let recyc = terms.recyc.ok_or_else(|| missing("recyc", variant))?;
            let vcyc = terms.vcyc.ok_or_else(|| missing("vcyc", variant))?;
            recyc
                .weighted(weights.alpha)
                .plus(vcyc.weighted(1.0 - weights.alpha))
        }
    };
    let mut total = terms
        .adv_g
        .plus(terms.cls_f.weighted(weights.lambda_cls))
        .plus(cyc_term.weighted(weights.lambda_cyc));
    if variant.uses_adv2() {
        // implicit weight 1
        total = total.plus(terms.adv2_g.ok_or_else(|| missing("adv2", variant))?);
    }
    if weights.lambda_id > 0.0 {
        total = total.plus(
            terms
                .id
                .ok_or_else(|| missing("identity", variant))?
                .weighted(weights.lambda_id),
        );
    }
    Ok(total)
}

/// Compose the discriminator/classifier objective: `-L_adv + l_cls * L_cls^r`
/// for the vanilla form; the WGAN-GP `d_term` is already the minimized
/// critic loss, so it enters with a positive sign.
pub fn dc_objective<V: LossTerm>(weights: &LossWeights, adv_d: V, cls_r: V) -> Result<V> {
    weights.validate()?;
    let adv = match weights.gan_objective {
        GanObjective::Vanilla => adv_d.weighted(-1.0),
        GanObjective::WganGp => adv_d,
    };
    Ok(adv.plus(cls_r.weighted(weights.lambda_cls)))
}

/// The auxiliary discriminator's objective (the second adversarial term alone).
pub fn d_prime_objective<V: LossTerm>(weights: &LossWeights, adv2_d: V) -> Result<V> {
    weights.validate()?;
    Ok(match weights.gan_objective {
        GanObjective::Vanilla => adv2_d.weighted(-1.0),
        GanObjective::WganGp => adv2_d,
    })
}

/// Numeric (reporting) composition of both totals from a recorded bundle.
pub fn full_objectives(
    weights: &LossWeights,
    bundle: &LossBundle,
    variant: Variant,
) -> Result<(f64, f64)> {
    let adv_d = bundle
        .adv_d
        .ok_or_else(|| Error::invalid_input("bundle missing adv_d".to_string()))?;
    let cls_r = bundle
        .cls_r
        .ok_or_else(|| Error::invalid_input("bundle missing cls_r".to_string()))?;
    let total_d = dc_objective(weights, adv_d, cls_r)?;
    let terms = GeneratorTerms {
        adv_g: bundle
            .adv_g
            .ok_or_else(|| Error::invalid_input("bundle missing adv_g".to_string()))?,
        cls_f: bundle
            .cls_f
            .ok_or_else(|| Error::invalid_input("bundle missing cls_f".to_string()))?,
        cyc: bundle.cyc,
        recyc: bundle.recyc,
        vcyc: bundle.vcyc,
        adv2_g: bundle.adv2_g,
        id: bundle.id,
    };
    let total_g = generator_objective(variant, weights, &terms)?;
    Ok((total_d, total_g))
}

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{dropout, Binding, Conv2d, Linear, Mode, ParamStore};
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

const LRELU_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscArch {
    /// Stacked stride-2 convs ending in a spatial realness map.
    PatchConv,
    /// Residual downsampling blocks, global mean pooling, scalar realness.
    ResNet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub image_size: usize,
    pub image_channels: usize,
    pub num_domains: usize,
    pub base_width: usize,
    pub arch: DiscArch,
    /// The auxiliary second discriminator reuses the architecture without
    /// the classifier head.
    pub with_classifier: bool,
}

impl DiscriminatorConfig {
    pub fn desk_scale(num_domains: usize) -> Self {
        DiscriminatorConfig {
            image_size: 32,
            image_channels: 3,
            num_domains,
            base_width: 16,
            arch: DiscArch::PatchConv,
            with_classifier: true,
        }
    }

    pub fn full_128(num_domains: usize) -> Self {
        DiscriminatorConfig {
            image_size: 128,
            image_channels: 3,
            num_domains,
            base_width: 64,
            arch: DiscArch::PatchConv,
            with_classifier: true,
        }
    }

    pub fn resnet_48(num_domains: usize) -> Self {
        DiscriminatorConfig {
            image_size: 48,
            image_channels: 1,
            num_domains,
            base_width: 64,
            arch: DiscArch::ResNet,
            with_classifier: true,
        }
    }

    /// Stride-2 stages: PatchConv halves down to a 2x2 map, ResNet runs a
    /// fixed four blocks (48 -> 3).
    pub fn num_blocks(&self) -> usize {
        match self.arch {
            DiscArch::PatchConv => (self.image_size.trailing_zeros() as usize).saturating_sub(1),
            DiscArch::ResNet => 4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.arch {
            DiscArch::PatchConv => {
                if !self.image_size.is_power_of_two() || self.image_size < 8 {
                    return Err(Error::invalid_spec(format!(
                        "PatchConv discriminator needs a power-of-two image size >= 8, got {}",
                        self.image_size
                    )));
                }
            }
            DiscArch::ResNet => {
                if self.image_size % 16 != 0 {
                    return Err(Error::invalid_spec(format!(
                        "ResNet discriminator needs image size divisible by 16, got {}",
                        self.image_size
                    )));
                }
            }
        }
        if self.num_domains < 2 || self.base_width == 0 {
            return Err(Error::invalid_spec(
                "num_domains >= 2 and base_width >= 1 required",
            ));
        }
        Ok(())
    }
}

/// Dropout rate per trunk depth (none on the first stage, then 0.2 x3, 0.5 onward).
fn dropout_rate(block: usize) -> f64 {
    match block {
        0 => 0.0,
        1..=3 => 0.2,
        _ => 0.5,
    }
}

struct ResBlockDown {
    conv1: Conv2d,
    conv2: Conv2d,
    skip: Conv2d,
    first: bool,
}

enum Trunk {
    Patch(Vec<Conv2d>),
    ResNet(Vec<ResBlockDown>),
}

enum Heads {
    Patch { d: Conv2d, c: Option<Conv2d> },
    Pooled { d: Linear, c: Option<Linear> },
}

/// Realness scores and domain logits from a shared trunk.
pub struct DiscriminatorOutput<'t, T: Scalar> {
    /// PatchConv: (N,1,h,w) score map. ResNet: (N,1) scalar.
    pub realness: Var<'t, T>,
    /// (N,c) unnormalized log-probabilities; `None` for headless instances.
    pub class_logits: Option<Var<'t, T>>,
}

impl<'t, T: Scalar> DiscriminatorOutput<'t, T> {
    /// Per-sample mean realness as a (N,1) matrix (mean over the patch map).
    pub fn realness_per_sample(&self) -> Var<'t, T> {
        let shape = self.realness.shape();
        let n = shape[0];
        let per: usize = shape.iter().skip(1).product();
        let flat = self.realness.reshape(&[n, per]);
        flat.sum_to(&[n, 1]).scale(T::from_f64(1.0 / per as f64))
    }

    pub fn logits(&self) -> Result<Var<'t, T>> {
        self.class_logits
            .ok_or_else(|| Error::Lifecycle("discriminator has no classifier head".into()))
    }
}

pub struct Discriminator {
    pub config: DiscriminatorConfig,
    trunk: Trunk,
    heads: Heads,
}

impl Discriminator {
    pub fn build<T: Scalar>(
        config: DiscriminatorConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let blocks = config.num_blocks();
        let widths: Vec<usize> = (0..blocks).map(|i| config.base_width << i).collect();
        match config.arch {
            DiscArch::PatchConv => {
                let mut convs = Vec::new();
                let mut in_c = config.image_channels;
                for (i, &out_c) in widths.iter().enumerate() {
                    convs.push(Conv2d::new(
                        store,
                        &format!("d.b{i}"),
                        in_c,
                        out_c,
                        4,
                        2,
                        1,
                        true,
                        rng,
                    ));
                    in_c = out_c;
                }
                let d = Conv2d::new(store, "d.head_src", in_c, 1, 3, 1, 1, false, rng);
                let c = config.with_classifier.then(|| {
                    // 2x2 valid conv collapses the final map to 1x1xc
                    Conv2d::new(store, "d.head_cls", in_c, config.num_domains, 2, 1, 0, false, rng)
                });
                Ok(Discriminator {
                    config,
                    trunk: Trunk::Patch(convs),
                    heads: Heads::Patch { d, c },
                })
            }
            DiscArch::ResNet => {
                let mut res = Vec::new();
                let mut in_c = config.image_channels;
                for (i, &out_c) in widths.iter().enumerate() {
                    res.push(ResBlockDown {
                        conv1: Conv2d::new(
                            store,
                            &format!("d.r{i}.c1"),
                            in_c,
                            out_c,
                            3,
                            1,
                            1,
                            true,
                            rng,
                        ),
                        conv2: Conv2d::new(
                            store,
                            &format!("d.r{i}.c2"),
                            out_c,
                            out_c,
                            3,
                            1,
                            1,
                            true,
                            rng,
                        ),
                        skip: Conv2d::new(
                            store,
                            &format!("d.r{i}.sc"),
                            in_c,
                            out_c,
                            1,
                            1,
                            0,
                            true,
                            rng,
                        ),
                        first: i == 0,
                    });
                    in_c = out_c;
                }
                let d = Linear::new(store, "d.head_src", in_c, 1, rng);
                let c = config
                    .with_classifier
                    .then(|| Linear::new(store, "d.head_cls", in_c, config.num_domains, rng));
                Ok(Discriminator {
                    config,
                    trunk: Trunk::ResNet(res),
                    heads: Heads::Pooled { d, c },
                })
            }
        }
    }

    pub fn forward<'t, T: Scalar>(
        &self,
        p: &Binding<'t, T>,
        x: Var<'t, T>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<DiscriminatorOutput<'t, T>> {
        let shape = x.shape();
        if shape.len() != 4
            || shape[1] != self.config.image_channels
            || shape[2] != self.config.image_size
            || shape[3] != self.config.image_size
        {
            return Err(Error::invalid_input(format!(
                "discriminator expects (N,{},{},{}), got {:?}",
                self.config.image_channels, self.config.image_size, self.config.image_size, shape
            )));
        }
        let slope = T::from_f64(LRELU_SLOPE);
        match (&self.trunk, &self.heads) {
            (Trunk::Patch(convs), Heads::Patch { d, c }) => {
                let mut h = x;
                for (i, conv) in convs.iter().enumerate() {
                    h = dropout(conv.forward(p, h).leaky_relu(slope), dropout_rate(i), mode, rng);
                }
                let realness = d.forward(p, h);
                let class_logits = c.as_ref().map(|conv| {
                    let n = h.shape()[0];
                    conv.forward(p, h).reshape(&[n, self.config.num_domains])
                });
                Ok(DiscriminatorOutput {
                    realness,
                    class_logits,
                })
            }
            (Trunk::ResNet(blocks), Heads::Pooled { d, c }) => {
                let mut h = x;
                for (i, block) in blocks.iter().enumerate() {
                    let branch = if block.first {
                        block.conv1.forward(p, h)
                    } else {
                        block.conv1.forward(p, h.leaky_relu(slope))
                    };
                    let branch = block.conv2.forward(p, branch.leaky_relu(slope));
                    let branch = avg_pool2(branch);
                    let skip = avg_pool2(block.skip.forward(p, h));
                    h = dropout(branch + skip, dropout_rate_resnet(i), mode, rng);
                }
                let h = h.leaky_relu(slope);
                // global mean pooling
                let hs = h.shape();
                let (n, c_ch) = (hs[0], hs[1]);
                let pooled = h
                    .sum_to(&[n, c_ch, 1, 1])
                    .scale(T::from_f64(1.0 / (hs[2] * hs[3]) as f64))
                    .reshape(&[n, c_ch]);
                let realness = d.forward(p, pooled);
                let class_logits = c.as_ref().map(|lin| lin.forward(p, pooled));
                Ok(DiscriminatorOutput {
                    realness,
                    class_logits,
                })
            }
            _ => unreachable!("trunk/head mismatch"),
        }
    }

    /// Layer listing in the layout of the architecture tables.
    pub fn summary(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        out.push_str(&format!(
            "Input: x ({s} x {s} x {ch})\n",
            s = c.image_size,
            ch = c.image_channels
        ));
        let mut s = c.image_size;
        match c.arch {
            DiscArch::PatchConv => {
                for i in 0..c.num_blocks() {
                    s /= 2;
                    let width = c.base_width << i;
                    let drop = dropout_rate(i);
                    if drop > 0.0 {
                        out.push_str(&format!(
                            "4 x 4, stride=2 Conv {width}, LReLU, {drop} Dropout -> {s} x {s} x {width}\n"
                        ));
                    } else {
                        out.push_str(&format!(
                            "4 x 4, stride=2 Conv {width}, LReLU -> {s} x {s} x {width}\n"
                        ));
                    }
                }
                out.push_str(&format!("3 x 3, stride=1 Conv 1 for D -> {s} x {s} x 1\n"));
                if c.with_classifier {
                    out.push_str(&format!(
                        "2 x 2, stride=1 Conv {c_dom} for C -> 1 x 1 x {c_dom}\n",
                        c_dom = c.num_domains
                    ));
                }
            }
            DiscArch::ResNet => {
                for i in 0..c.num_blocks() {
                    s /= 2;
                    let width = c.base_width << i;
                    let drop = dropout_rate_resnet(i);
                    if drop > 0.0 {
                        out.push_str(&format!(
                            "[3 x 3] x 2 ResBlock down, {drop} Dropout -> {s} x {s} x {width}\n"
                        ));
                    } else {
                        out.push_str(&format!(
                            "[3 x 3] x 2 ResBlock down -> {s} x {s} x {width}\n"
                        ));
                    }
                }
                let top = c.base_width << (c.num_blocks() - 1);
                out.push_str(&format!("Global mean pooling -> 1 x 1 x {top}\n"));
                out.push_str("1 x 1, stride=1 Conv 1 for D -> 1 x 1 x 1\n");
                if c.with_classifier {
                    out.push_str(&format!(
                        "1 x 1, stride=1 Conv {c_dom} for C -> 1 x 1 x {c_dom}\n",
                        c_dom = c.num_domains
                    ));
                }
            }
        }
        out
    }
}

/// Residual-trunk dropout schedule (none, 0.2, 0.5, 0.5).
fn dropout_rate_resnet(block: usize) -> f64 {
    match block {
        0 => 0.0,
        1 => 0.2,
        _ => 0.5,
    }
}

/// 2x2 mean pooling with stride 2 via reshape + reduction.
fn avg_pool2<'t, T: Scalar>(x: Var<'t, T>) -> Var<'t, T> {
    let s = x.shape();
    let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even spatial size");
    x.reshape(&[n, c, h / 2, 2, w / 2, 2])
        .sum_to(&[n, c, h / 2, 1, w / 2, 1])
        .scale(T::from_f64(0.25))
        .reshape(&[n, c, h / 2, w / 2])
}

use super::condition::{condition_concat, Conditioning};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::nn::{Binding, Conv2d, ConvTranspose2d, InstanceNorm2d, ParamStore};
use crate::scalar::Scalar;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shape of the translation generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub image_size: usize,
    pub image_channels: usize,
    pub num_domains: usize,
    /// Channel count of the first layer; doubles at each downsampling stage.
    pub base_width: usize,
    pub num_res_blocks: usize,
    /// Two parallel output convs (color mask + attention mask) instead of a
    /// single tanh head.
    pub attention_variant: bool,
    /// Kernel size of the first and last convolution (7 in the 128px family,
    /// 3 in the 48px family).
    pub head_kernel: usize,
}

impl GeneratorConfig {
    /// CPU-friendly default used by the synthetic-dataset experiments.
    pub fn desk_scale(num_domains: usize) -> Self {
        GeneratorConfig {
            image_size: 32,
            image_channels: 3,
            num_domains,
            base_width: 16,
            num_res_blocks: 2,
            attention_variant: false,
            head_kernel: 7,
        }
    }

    /// The 128px RGB configuration.
    pub fn full_128(num_domains: usize) -> Self {
        GeneratorConfig {
            image_size: 128,
            image_channels: 3,
            num_domains,
            base_width: 64,
            num_res_blocks: 6,
            attention_variant: false,
            head_kernel: 7,
        }
    }

    /// The 48px grayscale configuration with the attention head.
    pub fn attention_48(num_domains: usize) -> Self {
        GeneratorConfig {
            image_size: 48,
            image_channels: 1,
            num_domains,
            base_width: 64,
            num_res_blocks: 6,
            attention_variant: true,
            head_kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size % 4 != 0 {
            return Err(Error::invalid_spec(format!(
                "image_size {} not divisible by 4 (two stride-2 stages)",
                self.image_size
            )));
        }
        if self.base_width == 0 {
            return Err(Error::invalid_spec("base_width must be >= 1"));
        }
        if self.num_domains < 2 {
            return Err(Error::invalid_spec("num_domains must be >= 2"));
        }
        if self.head_kernel % 2 == 0 {
            return Err(Error::invalid_spec("head_kernel must be odd"));
        }
        Ok(())
    }
}

struct ResBlock {
    conv1: Conv2d,
    norm1: InstanceNorm2d,
    conv2: Conv2d,
    norm2: InstanceNorm2d,
}

enum Head {
    Plain(Conv2d),
    Attention { color: Conv2d, mask: Conv2d },
}

/// Down/residual/up translation generator with instance normalization.
pub struct Generator {
    pub config: GeneratorConfig,
    conv_in: Conv2d,
    norm_in: InstanceNorm2d,
    down: Vec<(Conv2d, InstanceNorm2d)>,
    blocks: Vec<ResBlock>,
    up: Vec<(ConvTranspose2d, InstanceNorm2d)>,
    head: Head,
}

/// Output of the attention-head variant: `output = m * color + (1 - m) * x`.
pub struct AttentionOutput<'t, T: Scalar> {
    pub color_mask: Var<'t, T>,
    pub attention_mask: Var<'t, T>,
    pub output: Var<'t, T>,
}

pub enum GenOutput<'t, T: Scalar> {
    Plain(Var<'t, T>),
    Attention(AttentionOutput<'t, T>),
}

impl<'t, T: Scalar> GenOutput<'t, T> {
    /// The translated image, whichever head produced it.
    pub fn image(&self) -> Var<'t, T> {
        match self {
            GenOutput::Plain(x) => *x,
            GenOutput::Attention(a) => a.output,
        }
    }
}

impl Generator {
    pub fn build<T: Scalar>(
        config: GeneratorConfig,
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let w = config.base_width;
        let k = config.head_kernel;
        let in_c = config.image_channels + config.num_domains;

        let conv_in = Conv2d::new(store, "g.in", in_c, w, k, 1, k / 2, false, rng);
        let norm_in = InstanceNorm2d::new(store, "g.in_norm", w);

        let mut down = Vec::new();
        for (i, (ci, co)) in [(w, 2 * w), (2 * w, 4 * w)].into_iter().enumerate() {
            let conv = Conv2d::new(store, &format!("g.down{i}"), ci, co, 4, 2, 1, false, rng);
            let norm = InstanceNorm2d::new(store, &format!("g.down{i}_norm"), co);
            down.push((conv, norm));
        }

        let bw = 4 * w;
        let blocks = (0..config.num_res_blocks)
            .map(|i| ResBlock {
                conv1: Conv2d::new(store, &format!("g.res{i}.c1"), bw, bw, 3, 1, 1, false, rng),
                norm1: InstanceNorm2d::new(store, &format!("g.res{i}.n1"), bw),
                conv2: Conv2d::new(store, &format!("g.res{i}.c2"), bw, bw, 3, 1, 1, false, rng),
                norm2: InstanceNorm2d::new(store, &format!("g.res{i}.n2"), bw),
            })
            .collect();

        let mut up = Vec::new();
        for (i, (ci, co)) in [(4 * w, 2 * w), (2 * w, w)].into_iter().enumerate() {
            let conv =
                ConvTranspose2d::new(store, &format!("g.up{i}"), ci, co, 4, 2, 1, false, rng);
            let norm = InstanceNorm2d::new(store, &format!("g.up{i}_norm"), co);
            up.push((conv, norm));
        }

        let head = if config.attention_variant {
            Head::Attention {
                color: Conv2d::new(
                    store,
                    "g.head_color",
                    w,
                    config.image_channels,
                    k,
                    1,
                    k / 2,
                    false,
                    rng,
                ),
                mask: Conv2d::new(store, "g.head_mask", w, 1, k, 1, k / 2, false, rng),
            }
        } else {
            Head::Plain(Conv2d::new(
                store,
                "g.head",
                w,
                config.image_channels,
                k,
                1,
                k / 2,
                false,
                rng,
            ))
        };

        Ok(Generator {
            config,
            conv_in,
            norm_in,
            down,
            blocks,
            up,
            head,
        })
    }

    /// Translate `x` to the domains given by `cond`.
    pub fn forward<'t, T: Scalar>(
        &self,
        p: &Binding<'t, T>,
        x: Var<'t, T>,
        cond: &Conditioning,
    ) -> Result<GenOutput<'t, T>> {
        let shape = x.shape();
        if shape.len() != 4
            || shape[1] != self.config.image_channels
            || shape[2] != self.config.image_size
            || shape[3] != self.config.image_size
        {
            return Err(Error::invalid_input(format!(
                "generator expects (N,{},{},{}), got {:?}",
                self.config.image_channels, self.config.image_size, self.config.image_size, shape
            )));
        }
        let slope = T::from_f64(0.0); // plain ReLU in G
        let mut h = condition_concat(x, cond, self.config.num_domains)?;
        h = self.norm_in.forward(p, self.conv_in.forward(p, h)).leaky_relu(slope);
        for (conv, norm) in &self.down {
            h = norm.forward(p, conv.forward(p, h)).leaky_relu(slope);
        }
        for block in &self.blocks {
            let r = block
                .norm1
                .forward(p, block.conv1.forward(p, h))
                .leaky_relu(slope);
            let r = block.norm2.forward(p, block.conv2.forward(p, r));
            h = h + r;
        }
        for (conv, norm) in &self.up {
            h = norm.forward(p, conv.forward(p, h)).leaky_relu(slope);
        }
        Ok(match &self.head {
            Head::Plain(conv) => GenOutput::Plain(conv.forward(p, h).tanh()),
            Head::Attention { color, mask } => {
                let color_mask = color.forward(p, h).tanh();
                // single-channel mask broadcast across image channels
                let m = mask.forward(p, h).sigmoid().broadcast(&[
                    shape[0],
                    self.config.image_channels,
                    shape[2],
                    shape[3],
                ]);
                let one_minus = m.neg().add_scalar(T::one());
                let output = m * color_mask + one_minus * x;
                GenOutput::Attention(AttentionOutput {
                    color_mask,
                    attention_mask: m,
                    output,
                })
            }
        })
    }

    /// Layer listing in the layout of the architecture tables.
    pub fn summary(&self) -> String {
        let c = &self.config;
        let (s, w, k) = (c.image_size, c.base_width, c.head_kernel);
        let mut out = String::new();
        out.push_str(&format!(
            "Input: x ({s} x {s} x {ch}) and y (c={c_dom}) -> {s} x {s} x {tot}\n",
            ch = c.image_channels,
            c_dom = c.num_domains,
            tot = c.image_channels + c.num_domains
        ));
        out.push_str(&format!(
            "{k} x {k}, stride=1 Conv {w}, IN, ReLU -> {s} x {s} x {w}\n"
        ));
        out.push_str(&format!(
            "4 x 4, stride=2 Conv {}, IN, ReLU -> {} x {} x {}\n",
            2 * w,
            s / 2,
            s / 2,
            2 * w
        ));
        out.push_str(&format!(
            "4 x 4, stride=2 Conv {}, IN, ReLU -> {} x {} x {}\n",
            4 * w,
            s / 4,
            s / 4,
            4 * w
        ));
        for _ in 0..c.num_res_blocks {
            out.push_str(&format!(
                "[3 x 3] x 2 ResBlock -> {} x {} x {}\n",
                s / 4,
                s / 4,
                4 * w
            ));
        }
        out.push_str(&format!(
            "4 x 4, stride=2 Deconv {}, IN, ReLU -> {} x {} x {}\n",
            2 * w,
            s / 2,
            s / 2,
            2 * w
        ));
        out.push_str(&format!(
            "4 x 4, stride=2 Deconv {w}, IN, ReLU -> {s} x {s} x {w}\n"
        ));
        match &self.head {
            Head::Plain(_) => out.push_str(&format!(
                "{k} x {k}, stride=1 Conv {ch}, Tanh -> {s} x {s} x {ch}\n",
                ch = c.image_channels
            )),
            Head::Attention { .. } => {
                out.push_str(&format!(
                    "{k} x {k}, stride=1 Conv {ch}, Tanh -> x_color ({s} x {s} x {ch})\n",
                    ch = c.image_channels
                ));
                out.push_str(&format!(
                    "{k} x {k}, stride=1 Conv 1, Sigmoid -> m ({s} x {s} x 1)\n"
                ));
                out.push_str("m * x_color + (1 - m) * x\n");
            }
        }
        out
    }
}

use super::{bias_uniform, kaiming_uniform, Binding, Mode, ParamId, ParamStore};
use crate::autodiff::{ConvGeom, Var};
use crate::scalar::Scalar;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;

/// 2-d convolution, NCHW, square kernel. Weight layout (out, in, k, k).
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let w_shape = [out_c, in_c, k, k];
        let w = store.register(format!("{name}.w"), kaiming_uniform(&w_shape, rng));
        let b = bias.then(|| {
            store.register(
                format!("{name}.b"),
                bias_uniform(out_c, &w_shape, rng),
            )
        });
        Conv2d {
            w,
            b,
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Binding<'t, T>, x: Var<'t, T>) -> Var<'t, T> {
        let shape = x.shape();
        assert_eq!(shape.len(), 4, "conv input must be NCHW");
        assert_eq!(shape[1], self.in_c, "conv channel mismatch");
        let geom = ConvGeom {
            batch: shape[0],
            channels: self.in_c,
            height: shape[2],
            width: shape[3],
            kh: self.k,
            kw: self.k,
            stride: self.stride,
            pad: self.pad,
        };
        let (oh, ow) = (geom.out_h(), geom.out_w());
        let cols = x.im2col(geom);
        let w2 = p.get(self.w).reshape(&[self.out_c, geom.patch_len()]);
        let mut y = cols
            .matmul(w2.t())
            .reshape(&[shape[0], oh, ow, self.out_c])
            .permute(&[0, 3, 1, 2]);
        if let Some(b) = self.b {
            let bias = p.get(b).reshape(&[1, self.out_c, 1, 1]);
            y = y + bias.broadcast(&[shape[0], self.out_c, oh, ow]);
        }
        y
    }
}

/// Fractionally strided (transposed) convolution. Weight layout (in, out, k, k).
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let w_shape = [in_c, out_c, k, k];
        let w = store.register(format!("{name}.w"), kaiming_uniform(&w_shape, rng));
        let b = bias.then(|| {
            store.register(
                format!("{name}.b"),
                bias_uniform(out_c, &w_shape, rng),
            )
        });
        ConvTranspose2d {
            w,
            b,
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    pub fn out_size(&self, in_size: usize) -> usize {
        (in_size - 1) * self.stride + self.k - 2 * self.pad
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Binding<'t, T>, x: Var<'t, T>) -> Var<'t, T> {
        let shape = x.shape();
        assert_eq!(shape.len(), 4, "deconv input must be NCHW");
        assert_eq!(shape[1], self.in_c, "deconv channel mismatch");
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        let (oh, ow) = (self.out_size(h), self.out_size(w));
        // The output image is the "image side" of the geometry; the input
        // positions play the role of the patch rows.
        let geom = ConvGeom {
            batch: n,
            channels: self.out_c,
            height: oh,
            width: ow,
            kh: self.k,
            kw: self.k,
            stride: self.stride,
            pad: self.pad,
        };
        assert_eq!(geom.rows(), n * h * w, "deconv geometry mismatch");
        let rows = x.permute(&[0, 2, 3, 1]).reshape(&[n * h * w, self.in_c]);
        let w2 = p
            .get(self.w)
            .reshape(&[self.in_c, self.out_c * self.k * self.k]);
        let mut y = rows.matmul(w2).col2im(geom);
        if let Some(b) = self.b {
            let bias = p.get(b).reshape(&[1, self.out_c, 1, 1]);
            y = y + bias.broadcast(&[n, self.out_c, oh, ow]);
        }
        y
    }
}

/// Instance normalization with affine parameters; normalizes each (n, c)
/// plane by its own spatial statistics in both train and eval mode.
#[derive(Clone, Debug)]
pub struct InstanceNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub channels: usize,
    pub eps: f64,
}

impl InstanceNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        let gamma = store.register(
            format!("{name}.gamma"),
            ArrayD::from_elem(IxDyn(&[channels]), T::one()),
        );
        let beta = store.register(
            format!("{name}.beta"),
            ArrayD::zeros(IxDyn(&[channels])),
        );
        InstanceNorm2d {
            gamma,
            beta,
            channels,
            eps: 1e-5,
        }
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Binding<'t, T>, x: Var<'t, T>) -> Var<'t, T> {
        let shape = x.shape();
        assert_eq!(shape.len(), 4);
        assert_eq!(shape[1], self.channels);
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let inv_hw = T::from_f64(1.0 / (h * w) as f64);
        let mean = x.sum_to(&[n, c, 1, 1]).scale(inv_hw);
        let centered = x - mean.broadcast(&shape);
        let var = centered.sqr().sum_to(&[n, c, 1, 1]).scale(inv_hw);
        let inv_std = var.add_scalar(T::from_f64(self.eps)).sqrt().recip();
        let normalized = centered * inv_std.broadcast(&shape);
        let gamma = p.get(self.gamma).reshape(&[1, c, 1, 1]).broadcast(&shape);
        let beta = p.get(self.beta).reshape(&[1, c, 1, 1]).broadcast(&shape);
        normalized * gamma + beta
    }
}

/// Fully connected layer. Weight layout (out, in).
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_f: usize,
    pub out_f: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_f: usize,
        out_f: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w_shape = [out_f, in_f];
        let w = store.register(format!("{name}.w"), kaiming_uniform(&w_shape, rng));
        let b = store.register(format!("{name}.b"), bias_uniform(out_f, &w_shape, rng));
        Linear { w, b, in_f, out_f }
    }

    pub fn forward<'t, T: Scalar>(&self, p: &Binding<'t, T>, x: Var<'t, T>) -> Var<'t, T> {
        let n = x.shape()[0];
        x.matmul(p.get(self.w).t()) + p.get(self.b).reshape(&[1, self.out_f]).broadcast(&[n, self.out_f])
    }
}

/// Inverted dropout: scales kept units by 1/(1-p) at train time, identity in eval.
pub fn dropout<'t, T: Scalar>(
    x: Var<'t, T>,
    p: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Var<'t, T> {
    if mode == Mode::Eval || p == 0.0 {
        return x;
    }
    assert!((0.0..1.0).contains(&p), "dropout rate must be in [0,1)");
    let keep = 1.0 - p;
    let scale = T::from_f64(1.0 / keep);
    let shape = x.shape();
    let mask = ArrayD::from_shape_fn(IxDyn(&shape), |_| {
        if rng.random::<f64>() < keep {
            scale
        } else {
            T::zero()
        }
    });
    // The mask is a constant: gradients scale by the same mask.
    let mask = x.tape().constant(mask);
    x * mask
}

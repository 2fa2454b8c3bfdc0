use super::*;
use crate::autodiff::gradcheck::{assert_grads_close, tape_grads};
use crate::autodiff::Tape;
use crate::rng::stream;
use ndarray::{ArrayD, Ix4, IxDyn};

fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
    use rand::Rng;
    let mut rng = stream(seed, "nn-test", 0);
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

/// Direct 7-loop convolution, the independent oracle for the im2col path.
fn conv_oracle(
    x: &ArrayD<f64>,
    w: &ArrayD<f64>,
    b: Option<&ArrayD<f64>>,
    stride: usize,
    pad: usize,
) -> ArrayD<f64> {
    let x = x.view().into_dimensionality::<Ix4>().unwrap();
    let w = w.view().into_dimensionality::<Ix4>().unwrap();
    let (n, c_in, h, win) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (c_out, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (win + 2 * pad - k) / stride + 1;
    let mut out = ndarray::Array4::<f64>::zeros((n, c_out, oh, ow));
    for ni in 0..n {
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.map(|b| b[co]).unwrap_or(0.0);
                    for ci in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < win {
                                    acc += x[(ni, ci, iy as usize, ix as usize)]
                                        * w[(co, ci, ky, kx)];
                                }
                            }
                        }
                    }
                    out[(ni, co, oy, ox)] = acc;
                }
            }
        }
    }
    out.into_dyn()
}

#[test]
fn conv2d_matches_direct_convolution() {
    let mut rng = stream(1, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let conv = Conv2d::new(&mut store, "c", 3, 5, 3, 2, 1, true, &mut rng);
    let x = randn(&[2, 3, 7, 7], 2);

    let tape = Tape::new();
    let p = store.bind(&tape);
    let y = conv.forward(&p, tape.constant(x.clone()));

    let expected = conv_oracle(
        &x,
        store.value(conv.w),
        conv.b.map(|b| store.value(b)),
        2,
        1,
    );
    let diff = (&y.value() - &expected).mapv(f64::abs).sum();
    assert!(diff < 1e-9, "conv mismatch {diff}");
}

#[test]
fn conv_transpose_is_adjoint_of_conv() {
    // For shared kernel K: <conv(x), y> == <x, deconv(y)> when deconv's
    // (in,out,k,k) weight stores K transposed in its channel axes.
    let k = 4;
    let (cin, cout) = (3, 2);
    let kernel = randn(&[cout, cin, k, k], 5);

    let mut store_c = ParamStore::<f64>::new();
    let mut rng = stream(0, "init", 1);
    let conv = Conv2d::new(&mut store_c, "c", cin, cout, k, 2, 1, false, &mut rng);
    store_c.set_value(conv.w, kernel.clone());

    let mut store_d = ParamStore::<f64>::new();
    let deconv = ConvTranspose2d::new(&mut store_d, "d", cout, cin, k, 2, 1, false, &mut rng);
    store_d.set_value(deconv.w, kernel.clone());

    let x = randn(&[2, cin, 8, 8], 6);
    let y = randn(&[2, cout, 4, 4], 7);

    let tape = Tape::new();
    let pc = store_c.bind(&tape);
    let pd = store_d.bind(&tape);
    let lhs = (conv.forward(&pc, tape.constant(x.clone())) * tape.constant(y.clone()))
        .sum_all()
        .scalar();
    let rhs = (deconv.forward(&pd, tape.constant(y)) * tape.constant(x))
        .sum_all()
        .scalar();
    assert!((lhs - rhs).abs() < 1e-9, "lhs {lhs} rhs {rhs}");
}

#[test]
fn conv_transpose_doubles_spatial_size() {
    let mut rng = stream(3, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let deconv = ConvTranspose2d::new(&mut store, "d", 4, 2, 4, 2, 1, true, &mut rng);
    let tape = Tape::new();
    let p = store.bind(&tape);
    let y = deconv.forward(&p, tape.constant(randn(&[1, 4, 5, 5], 8)));
    assert_eq!(y.shape(), vec![1, 2, 10, 10]);
}

#[test]
fn instance_norm_normalizes_each_plane() {
    let mut store = ParamStore::<f64>::new();
    let norm = InstanceNorm2d::new(&mut store, "in", 3);
    let x = randn(&[2, 3, 6, 6], 9);
    let tape = Tape::new();
    let p = store.bind(&tape);
    let y = norm.forward(&p, tape.constant(x)).value();
    let y = y.view().into_dimensionality::<Ix4>().unwrap();
    for n in 0..2 {
        for c in 0..3 {
            let plane = y.slice(ndarray::s![n, c, .., ..]);
            let mean = plane.mean().unwrap();
            let var = plane.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }
}

#[test]
fn layer_stack_gradients_match_finite_differences() {
    let mut rng = stream(11, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let conv = Conv2d::new(&mut store, "c", 2, 3, 3, 1, 1, false, &mut rng);
    let norm = InstanceNorm2d::new(&mut store, "n", 3);
    let deconv = ConvTranspose2d::new(&mut store, "d", 3, 2, 4, 2, 1, true, &mut rng);
    let x = randn(&[2, 2, 6, 6], 12);

    let run = |params: &[ArrayD<f64>]| {
        tape_grads(params, |tape, vars| {
            let p = Binding::from_vars(vars);
            let h = norm.forward(&p, conv.forward(&p, tape.constant(x.clone())));
            deconv.forward(&p, h.relu()).tanh().sqr().mean_all()
        })
    };
    let (_, grads) = run(store.values());
    assert_grads_close(&mut |p| run(p).0, store.values(), &grads, 30, 21, 1e-4);
}

#[test]
fn dropout_eval_is_identity_and_train_is_seed_deterministic() {
    let x = randn(&[4, 4], 13);
    let tape = Tape::new();
    let xv = tape.constant(x.clone());
    let y_eval = dropout(xv, 0.5, Mode::Eval, &mut stream(1, "drop", 0));
    assert_eq!(y_eval.value(), x);

    let y1 = dropout(xv, 0.5, Mode::Train, &mut stream(1, "drop", 7)).value();
    let y2 = dropout(xv, 0.5, Mode::Train, &mut stream(1, "drop", 7)).value();
    assert_eq!(y1, y2);
    // kept entries are scaled by exactly 1/(1-p)
    for (a, b) in x.iter().zip(y1.iter()) {
        assert!(*b == 0.0 || (*b - a * 2.0).abs() < 1e-12);
    }
}

#[test]
fn adam_single_step_matches_reference_formula() {
    let mut store = ParamStore::<f64>::new();
    let id = store.register("p", ndarray::arr1(&[1.0, -2.0]).into_dyn());
    let mut adam = Adam::new(&store, 0.5, 0.999);
    let g = ndarray::arr1(&[0.1, -0.3]).into_dyn();
    adam.step(&mut store, &[Some(g.clone())], 0.01);

    // t=1: m = 0.5*g, v = 0.001*g^2, mhat = g, vhat = g^2
    // p -= lr * g / (|g| + eps)  => p -= lr * sign(g) approximately
    let p = store.value(id);
    assert!((p[0] - (1.0 - 0.01 * (0.1 / (0.1 + 1e-8)))).abs() < 1e-12);
    assert!((p[1] - (-2.0 + 0.01 * (0.3 / (0.3 + 1e-8)))).abs() < 1e-12);
}

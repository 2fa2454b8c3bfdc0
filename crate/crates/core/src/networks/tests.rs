use super::*;
use crate::autodiff::gradcheck::{assert_grads_close, tape_grads};
use crate::autodiff::Tape;
use crate::nn::{Mode, ParamStore};
use crate::rng::stream;
use ndarray::{ArrayD, IxDyn};

fn uniform_images(shape: &[usize], seed: u64) -> ArrayD<f64> {
    use rand::Rng;
    let mut rng = stream(seed, "net-test", 0);
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
}

#[test]
fn condition_concat_one_hot_planes() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(uniform_images(&[2, 3, 32, 32], 1));
    let cond = Conditioning::Labels(vec![2, 4]);
    let out = condition_concat(x, &cond, 5).unwrap();
    assert_eq!(out.shape(), vec![2, 8, 32, 32]);

    let v = out.value();
    // plane 2 of sample 0 is all ones, other label planes all zeros
    for c in 0..5 {
        let plane = v.slice(ndarray::s![0, 3 + c, .., ..]);
        let expected = if c == 2 { 1.0 } else { 0.0 };
        assert!(plane.iter().all(|&p| p == expected), "plane {c}");
    }
    // direct summation oracle: label planes of a single-label batch sum to H*W
    let label_sum: f64 = (0..5)
        .map(|c| v.slice(ndarray::s![1, 3 + c, .., ..]).sum())
        .sum();
    assert_eq!(label_sum, (32 * 32) as f64);
}

#[test]
fn condition_concat_zero_attributes_gives_zero_planes() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(uniform_images(&[1, 3, 8, 8], 2));
    let cond = Conditioning::Attributes(vec![vec![false; 4]]);
    let out = condition_concat(x, &cond, 4).unwrap();
    let v = out.value();
    assert_eq!(v.slice(ndarray::s![0, 3.., .., ..]).sum(), 0.0);
}

#[test]
fn condition_concat_rejects_bad_labels() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(uniform_images(&[1, 3, 8, 8], 3));
    assert!(condition_concat(x, &Conditioning::Labels(vec![5]), 5).is_err());
    assert!(condition_concat(x, &Conditioning::Attributes(vec![vec![true; 3]]), 5).is_err());
}

#[test]
fn generator_output_shape_and_range() {
    let mut rng = stream(7, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let config = GeneratorConfig {
        image_size: 16,
        image_channels: 3,
        num_domains: 4,
        base_width: 8,
        num_res_blocks: 1,
        attention_variant: false,
        head_kernel: 7,
    };
    let g = Generator::build(config, &mut store, &mut rng).unwrap();

    let tape = Tape::new();
    let p = store.bind(&tape);
    let x = tape.constant(uniform_images(&[3, 3, 16, 16], 4));
    let out = g
        .forward(&p, x, &Conditioning::Labels(vec![0, 1, 3]))
        .unwrap();
    let img = out.image().value();
    assert_eq!(img.shape(), &[3, 3, 16, 16]);
    // exhaustive range scan: tanh head keeps every pixel in [-1, 1]
    assert!(img.iter().all(|&v| (-1.0..=1.0).contains(&v)));
}

#[test]
fn attention_head_composites_exactly() {
    let mut rng = stream(8, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let config = GeneratorConfig {
        image_size: 16,
        image_channels: 1,
        num_domains: 3,
        base_width: 8,
        num_res_blocks: 1,
        attention_variant: true,
        head_kernel: 3,
    };
    let g = Generator::build(config, &mut store, &mut rng).unwrap();

    let tape = Tape::new();
    let p = store.bind(&tape);
    let x_arr = uniform_images(&[2, 1, 16, 16], 5);
    let x = tape.constant(x_arr.clone());
    match g.forward(&p, x, &Conditioning::Labels(vec![1, 2])).unwrap() {
        GenOutput::Attention(att) => {
            let m = att.attention_mask.value();
            let color = att.color_mask.value();
            let out = att.output.value();
            assert!(m.iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(color.iter().all(|&v| (-1.0..=1.0).contains(&v)));
            let recomposed = &m * &color + (1.0 - &m) * &x_arr;
            let max_err = (&out - &recomposed)
                .iter()
                .fold(0.0f64, |a, &d| a.max(d.abs()));
            assert!(max_err < 1e-6, "compositing error {max_err}");
            // zero mask means the compositing formula returns the input untouched
            let zero_out = &m * 0.0 * &color + (1.0 - &m * 0.0) * &x_arr;
            assert_eq!(zero_out, x_arr);
        }
        GenOutput::Plain(_) => panic!("expected attention output"),
    }
}

#[test]
fn generator_rejects_wrong_input_shape() {
    let mut rng = stream(9, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let g = Generator::build(GeneratorConfig::desk_scale(3), &mut store, &mut rng).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let x = tape.constant(uniform_images(&[1, 3, 16, 16], 6));
    assert!(g.forward(&p, x, &Conditioning::Labels(vec![0])).is_err());
}

#[test]
fn discriminator_patch_shapes() {
    let mut rng = stream(10, "init", 0);
    let mut store = ParamStore::<f32>::new();
    let d = Discriminator::build(DiscriminatorConfig::desk_scale(3), &mut store, &mut rng)
        .unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let x = tape.constant(uniform_images(&[2, 3, 32, 32], 7).mapv(|v| v as f32));
    let out = d
        .forward(&p, x, Mode::Eval, &mut stream(0, "drop", 0))
        .unwrap();
    // 4 stride-2 stages: 32 -> 2, PatchGAN map 2x2
    assert_eq!(out.realness.shape(), vec![2, 1, 2, 2]);
    assert_eq!(out.logits().unwrap().shape(), vec![2, 3]);
    assert_eq!(out.realness_per_sample().shape(), vec![2, 1]);
}

#[test]
fn discriminator_patch_map_is_size_over_64_at_full_scale() {
    let mut rng = stream(11, "init", 0);
    let mut store = ParamStore::<f32>::new();
    let d = Discriminator::build(DiscriminatorConfig::full_128(8), &mut store, &mut rng)
        .unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let x = tape.constant(uniform_images(&[1, 3, 128, 128], 8).mapv(|v| v as f32));
    let out = d
        .forward(&p, x, Mode::Eval, &mut stream(0, "drop", 0))
        .unwrap();
    assert_eq!(out.realness.shape(), vec![1, 1, 128 / 64, 128 / 64]);
    assert_eq!(out.logits().unwrap().shape(), vec![1, 8]);
}

#[test]
fn discriminator_resnet_scalar_realness() {
    let mut rng = stream(12, "init", 0);
    let mut store = ParamStore::<f32>::new();
    let mut config = DiscriminatorConfig::resnet_48(5);
    config.base_width = 8; // desk-size trunk, same block structure
    let d = Discriminator::build(config, &mut store, &mut rng).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let x = tape.constant(uniform_images(&[3, 1, 48, 48], 9).mapv(|v| v as f32));
    let out = d
        .forward(&p, x, Mode::Eval, &mut stream(0, "drop", 0))
        .unwrap();
    assert_eq!(out.realness.shape(), vec![3, 1]);
    assert_eq!(out.logits().unwrap().shape(), vec![3, 5]);
}

#[test]
fn headless_discriminator_has_no_logits() {
    let mut rng = stream(13, "init", 0);
    let mut store = ParamStore::<f32>::new();
    let mut config = DiscriminatorConfig::desk_scale(3);
    config.with_classifier = false;
    let d = Discriminator::build(config, &mut store, &mut rng).unwrap();
    let tape = Tape::new();
    let p = store.bind(&tape);
    let x = tape.constant(uniform_images(&[1, 3, 32, 32], 10).mapv(|v| v as f32));
    let out = d
        .forward(&p, x, Mode::Eval, &mut stream(0, "drop", 0))
        .unwrap();
    assert!(out.class_logits.is_none());
    assert!(out.logits().is_err());
}

/// Parameter counts are a pure function of the configuration; frozen against
/// hand arithmetic over the architecture tables.
#[test]
fn parameter_count_goldens() {
    let mut rng = stream(14, "init", 0);

    let mut store = ParamStore::<f32>::new();
    Generator::build(GeneratorConfig::full_128(8), &mut store, &mut rng).unwrap();
    assert_eq!(store.num_scalars(), 8_439_936);

    let mut store = ParamStore::<f32>::new();
    Generator::build(GeneratorConfig::desk_scale(3), &mut store, &mut rng).unwrap();
    assert_eq!(store.num_scalars(), 237_264);

    let mut store = ParamStore::<f32>::new();
    Generator::build(GeneratorConfig::attention_48(5), &mut store, &mut rng).unwrap();
    assert_eq!(store.num_scalars(), 8_400_640);

    let mut store = ParamStore::<f32>::new();
    Discriminator::build(DiscriminatorConfig::full_128(8), &mut store, &mut rng).unwrap();
    assert_eq!(store.num_scalars(), 44_786_624);

    let mut store = ParamStore::<f32>::new();
    Discriminator::build(DiscriminatorConfig::desk_scale(3), &mut store, &mut rng).unwrap();
    assert_eq!(store.num_scalars(), 175_728);

    let mut store = ParamStore::<f32>::new();
    Discriminator::build(DiscriminatorConfig::resnet_48(5), &mut store, &mut rng).unwrap();
    assert_eq!(store.num_scalars(), 4_860_358);
}

#[test]
fn generator_gradients_match_finite_differences() {
    let mut rng = stream(15, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let config = GeneratorConfig {
        image_size: 8,
        image_channels: 2,
        num_domains: 3,
        base_width: 4,
        num_res_blocks: 1,
        attention_variant: false,
        head_kernel: 3,
    };
    let g = Generator::build(config, &mut store, &mut rng).unwrap();
    let x = uniform_images(&[2, 2, 8, 8], 11);
    let cond = Conditioning::Labels(vec![1, 2]);

    let run = |params: &[ArrayD<f64>]| {
        tape_grads(params, |tape, vars| {
            let p = crate::nn::Binding::from_vars(vars);
            g.forward(&p, tape.constant(x.clone()), &cond)
                .unwrap()
                .image()
                .sqr()
                .mean_all()
        })
    };
    let (_, grads) = run(store.values());
    assert_grads_close(&mut |p| run(p).0, store.values(), &grads, 10, 31, 1e-3);
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    let mut rng = stream(16, "init", 0);
    let mut store = ParamStore::<f64>::new();
    let config = DiscriminatorConfig {
        image_size: 8,
        image_channels: 2,
        num_domains: 3,
        base_width: 4,
        arch: DiscArch::PatchConv,
        with_classifier: true,
    };
    let d = Discriminator::build(config, &mut store, &mut rng).unwrap();
    let x = uniform_images(&[2, 2, 8, 8], 12);

    let run = |params: &[ArrayD<f64>]| {
        tape_grads(params, |tape, vars| {
            let p = crate::nn::Binding::from_vars(vars);
            let out = d
                .forward(&p, tape.constant(x.clone()), Mode::Eval, &mut stream(0, "d", 0))
                .unwrap();
            out.realness_per_sample().tanh().mean_all()
                + out.logits().unwrap().log_softmax().sqr().mean_all()
        })
    };
    let (_, grads) = run(store.values());
    assert_grads_close(&mut |p| run(p).0, store.values(), &grads, 10, 32, 1e-3);
}

#[test]
fn summaries_match_table_layout() {
    let mut rng = stream(17, "init", 0);
    let mut store = ParamStore::<f32>::new();
    let g = Generator::build(GeneratorConfig::full_128(8), &mut store, &mut rng).unwrap();
    let s = g.summary();
    assert!(s.contains("7 x 7, stride=1 Conv 64, IN, ReLU -> 128 x 128 x 64"));
    assert!(s.contains("4 x 4, stride=2 Conv 256, IN, ReLU -> 32 x 32 x 256"));
    assert_eq!(s.matches("[3 x 3] x 2 ResBlock").count(), 6);
    assert!(s.contains("7 x 7, stride=1 Conv 3, Tanh -> 128 x 128 x 3"));

    let mut store = ParamStore::<f32>::new();
    let d = Discriminator::build(DiscriminatorConfig::full_128(8), &mut store, &mut rng).unwrap();
    let s = d.summary();
    assert!(s.contains("4 x 4, stride=2 Conv 64, LReLU -> 64 x 64 x 64"));
    assert!(s.contains("4 x 4, stride=2 Conv 2048, LReLU, 0.5 Dropout -> 2 x 2 x 2048"));
    assert!(s.contains("3 x 3, stride=1 Conv 1 for D -> 2 x 2 x 1"));
    assert!(s.contains("2 x 2, stride=1 Conv 8 for C -> 1 x 1 x 8"));

    let mut store = ParamStore::<f32>::new();
    let d = Discriminator::build(DiscriminatorConfig::resnet_48(5), &mut store, &mut rng).unwrap();
    let s = d.summary();
    assert!(s.contains("[3 x 3] x 2 ResBlock down -> 24 x 24 x 64"));
    assert!(s.contains("Global mean pooling -> 1 x 1 x 512"));
    assert!(s.contains("1 x 1, stride=1 Conv 5 for C -> 1 x 1 x 5"));
}

use super::*;
use crate::autodiff::gradcheck::{assert_grads_close, tape_grads};
use crate::autodiff::Tape;
use crate::losses::nll_from_logits;
use crate::networks::SmallCnnConfig;
use crate::noise::{build_asymmetric, build_symmetric, corrupt, TransitionMatrix};
use crate::rng::stream;
use ndarray::{Array2, ArrayD, IxDyn};
use rand::Rng;

fn randn(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = stream(seed, "robust-test", 0);
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

#[test]
fn identity_transition_equals_cross_entropy_bitwise() {
    let logits_arr = randn(&[5, 4], 1);
    let labels = [0usize, 3, 1, 2, 0];
    let t = TransitionMatrix::identity(4).unwrap();

    let tape = Tape::<f64>::new();
    let logits = tape.constant(logits_arr.clone());
    let corrected = forward_corrected_loss(logits, &labels, &t).unwrap();
    let plain = nll_from_logits(tape.constant(logits_arr), &labels).unwrap();
    assert_eq!(
        corrected.loss.scalar().to_bits(),
        plain.scalar().to_bits()
    );
    assert_eq!(corrected.floored, 0);
}

#[test]
fn uniform_predictions_give_log_c_under_the_noise_families() {
    // Both noise families are doubly stochastic, so the uniform prediction is
    // a fixed point of the mixing and the loss stays log c.
    let tape = Tape::<f64>::new();
    for t in [
        build_symmetric(8, 0.5).unwrap(),
        build_asymmetric(8, 0.45).unwrap(),
    ] {
        let logits = tape.constant(ArrayD::zeros(IxDyn(&[6, 8])));
        let labels = [0usize, 1, 2, 3, 4, 7];
        let out = forward_corrected_loss(logits, &labels, &t).unwrap();
        assert!((out.loss.scalar() - 8.0f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn forward_loss_matches_dense_algebra_oracle() {
    // independent computation: softmax by hand, dense matrix product, NLL
    let t = build_symmetric(3, 0.25).unwrap();
    let logits_arr = ndarray::arr2(&[[2.0, -1.0, 0.5], [0.0, 0.0, 3.0], [-2.0, 1.0, 1.0]]);
    let labels = [1usize, 2, 0];

    let mut expected = 0.0;
    for (i, row) in logits_arr.rows().into_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let p: Vec<f64> = exps.iter().map(|e| e / z).collect();
        let mut corrected = 0.0;
        for (k, &pk) in p.iter().enumerate() {
            corrected += t.entries()[(k, labels[i])] * pk;
        }
        expected += -corrected.ln();
    }
    expected /= 3.0;

    let tape = Tape::<f64>::new();
    let out = forward_corrected_loss(tape.constant(logits_arr.into_dyn()), &labels, &t).unwrap();
    assert!((out.loss.scalar() - expected).abs() < 1e-12);
    assert!(out.loss.scalar() >= 0.0);
}

#[test]
fn forward_loss_gradient_matches_finite_differences() {
    let t = build_symmetric(4, 0.3).unwrap();
    let labels = [2usize, 0, 3, 1, 2];
    let params = vec![randn(&[5, 4], 2)];
    let run = |p: &[ArrayD<f64>]| {
        tape_grads(p, |_tape, vars| {
            forward_corrected_loss(vars[0], &labels, &t).unwrap().loss
        })
    };
    let (_, grads) = run(&params);
    assert_grads_close(&mut |p| run(p).0, &params, &grads, 20, 3, 1e-4);
}

#[test]
fn forward_loss_floors_zero_probabilities() {
    // asymmetric T has exact zeros; a saturated prediction on a class that
    // can never produce the observed label drives the corrected probability
    // to zero, which must clamp rather than produce -inf
    let t = build_asymmetric(4, 0.3).unwrap();
    let mut logits = Array2::<f64>::zeros((1, 4));
    logits[(0, 0)] = 1e3; // p = point mass on class 0; label 2 unreachable from 0
    let tape = Tape::<f64>::new();
    let out = forward_corrected_loss(tape.constant(logits.into_dyn()), &[2], &t).unwrap();
    assert_eq!(out.floored, 1);
    assert!(out.loss.scalar().is_finite());
    assert!((out.loss.scalar() - (-(1e-12f64).ln())).abs() < 1e-6);
}

#[test]
fn config_validation() {
    assert!(RobustClsConfig::naive().validate().is_ok());
    assert!(RobustClsConfig::forward(build_symmetric(3, 0.5).unwrap())
        .validate()
        .is_ok());
    let missing_t = RobustClsConfig {
        method: ClsMethod::Forward,
        transition: None,
        drop_rate: 0.0,
    };
    assert!(missing_t.validate().is_err());
    assert!(RobustClsConfig::coteaching(1.0).validate().is_err());
    assert!(RobustClsConfig::coteaching(0.5).validate().is_ok());
}

#[test]
fn coteach_select_counts_and_cross_peer() {
    // tau = 0 keeps everything
    let a = vec![0.5, 0.1, 0.9];
    let b = vec![0.3, 0.8, 0.2];
    let (for_a, for_b) = coteach_select(&a, &b, 0.0).unwrap();
    assert_eq!(for_a, vec![0, 1, 2]);
    assert_eq!(for_b, vec![0, 1, 2]);

    // tau = 0.5, B = 16 keeps 8 for each peer
    let losses: Vec<f64> = (0..16).map(|i| (i * 7 % 16) as f64).collect();
    let (for_a, for_b) = coteach_select(&losses, &losses, 0.5).unwrap();
    assert_eq!(for_a.len(), 8);
    assert_eq!(for_b.len(), 8);

    // cross-peer: A's subset is chosen by B's losses
    let a = vec![0.0, 0.0, 10.0, 10.0];
    let b = vec![10.0, 10.0, 0.0, 0.0];
    let (for_a, for_b) = coteach_select(&a, &b, 0.5).unwrap();
    assert_eq!(for_a, vec![2, 3]); // smallest entries of b
    assert_eq!(for_b, vec![0, 1]); // smallest entries of a
}

#[test]
fn coteach_select_matches_full_sort_oracle() {
    let mut rng = stream(4, "select", 0);
    for case in 0..200 {
        let batch = rng.random_range(1..40);
        let tau = rng.random_range(0.0..0.99);
        let losses_a: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
        let losses_b: Vec<f64> = (0..batch).map(|_| rng.random::<f64>()).collect();
        let keep = ((1.0 - tau) * batch as f64).ceil() as usize;

        let oracle = |l: &[f64]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..l.len()).collect();
            idx.sort_by(|&i, &j| l[i].partial_cmp(&l[j]).unwrap().then(i.cmp(&j)));
            let mut keep_idx: Vec<usize> = idx[..keep].to_vec();
            keep_idx.sort_unstable();
            keep_idx
        };
        let (for_a, for_b) = coteach_select(&losses_a, &losses_b, tau).unwrap();
        assert_eq!(for_a, oracle(&losses_b), "case {case}");
        assert_eq!(for_b, oracle(&losses_a), "case {case}");
        assert_eq!(for_a.len(), keep);
        // distinct and in range
        assert!(for_a.windows(2).all(|w| w[0] < w[1]));
        assert!(for_a.iter().all(|&i| i < batch));
    }
}

#[test]
fn coteach_select_rejects_bad_input() {
    assert!(coteach_select(&[], &[], 0.2).is_err());
    assert!(coteach_select(&[1.0], &[1.0, 2.0], 0.2).is_err());
    assert!(coteach_select(&[1.0], &[1.0], 1.0).is_err());
}

fn blob_images<T: crate::Scalar>(
    n_per_class: usize,
    c: usize,
    size: usize,
    seed: u64,
) -> (ArrayD<T>, Vec<usize>) {
    let mut rng = stream(seed, "blobs", 0);
    let n = n_per_class * c;
    let mut images = ArrayD::<T>::zeros(IxDyn(&[n, 3, size, size]));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % c;
        labels.push(y);
        for ch in 0..3 {
            let base = if ch == y % 3 { 0.8 } else { -0.6 };
            for h in 0..size {
                for w in 0..size {
                    let noise: f64 = rng.random_range(-0.35..0.35);
                    images[IxDyn(&[i, ch, h, w])] = T::from_f64(base + noise);
                }
            }
        }
    }
    (images, labels)
}

#[test]
fn coteach_step_tau_zero_keeps_identical_peers_identical() {
    let config = SmallCnnConfig {
        image_size: 8,
        image_channels: 3,
        num_classes: 3,
        width: 4,
    };
    // same init stream for both peers
    let mut state = CoteachingState::<f32>::build(
        config,
        &mut stream(9, "peer", 0),
        &mut stream(9, "peer", 0),
    )
    .unwrap();
    assert!(!state.shared_trunk);
    let (images, labels) = blob_images::<f32>(8, 3, 8, 10);

    for _ in 0..3 {
        let out = coteach_step(&mut state, &images, &labels, 0.0, 1e-3).unwrap();
        // tau = 0: full batch for both peers (naive reduction)
        assert_eq!(out.selected_a.len(), labels.len());
        assert_eq!(out.selected_b.len(), labels.len());
        assert_eq!(out.loss_a, out.loss_b);
    }
    for (a, b) in state
        .peer_a
        .store
        .values()
        .iter()
        .zip(state.peer_b.store.values())
    {
        assert_eq!(a, b);
    }
}

#[test]
fn coteach_step_selects_prefix_of_sorted_losses() {
    let config = SmallCnnConfig {
        image_size: 8,
        image_channels: 3,
        num_classes: 3,
        width: 4,
    };
    let mut state = CoteachingState::<f32>::build(
        config,
        &mut stream(11, "peer", 0),
        &mut stream(12, "peer", 1),
    )
    .unwrap();
    let (images, labels) = blob_images::<f32>(8, 3, 8, 13);
    let losses_a = state.peer_a.per_sample_losses(&images, &labels).unwrap();
    let losses_b = state.peer_b.per_sample_losses(&images, &labels).unwrap();

    let out = coteach_step(&mut state, &images, &labels, 0.25, 1e-3).unwrap();
    // selected-subset losses form a prefix of the sorted per-sample losses
    let mut sorted_b = losses_b.clone();
    sorted_b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut selected: Vec<f64> = out.selected_a.iter().map(|&i| losses_b[i]).collect();
    selected.sort_by(|x, y| x.partial_cmp(y).unwrap());
    assert_eq!(selected, sorted_b[..selected.len()].to_vec());

    let mut sorted_a = losses_a.clone();
    sorted_a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut selected: Vec<f64> = out.selected_b.iter().map(|&i| losses_a[i]).collect();
    selected.sort_by(|x, y| x.partial_cmp(y).unwrap());
    assert_eq!(selected, sorted_a[..selected.len()].to_vec());
}

/// Directional trend: with the true transition matrix, the forward-corrected
/// classifier keeps a higher clean test accuracy than the naive classifier
/// once the naive one has started fitting the noise.
#[test]
fn forward_correction_beats_naive_after_memorization() {
    let c = 3;
    let size = 8;
    let config = SmallCnnConfig {
        image_size: size,
        image_channels: 3,
        num_classes: c,
        width: 12,
    };
    let t = build_symmetric(c, 0.5).unwrap();
    let (train_images, clean_labels) = blob_images::<f32>(50, c, size, 20);
    let (test_images, test_labels) = blob_images::<f32>(40, c, size, 21);
    let noisy_labels = corrupt(&clean_labels, &t, &mut stream(22, "corrupt", 0)).unwrap();

    let mut naive = PeerClassifier::<f32>::build(config, &mut stream(23, "init", 0)).unwrap();
    let mut fwd = PeerClassifier::<f32>::build(config, &mut stream(23, "init", 0)).unwrap();
    let all: Vec<usize> = (0..noisy_labels.len()).collect();

    for _step in 0..300 {
        naive
            .train_on_subset(&train_images, &noisy_labels, &all, 2e-3)
            .unwrap();
        // forward-corrected update
        let tape = Tape::new();
        let p = fwd.store.bind(&tape);
        let logits = fwd
            .net
            .logits(&p, tape.constant(train_images.clone()))
            .unwrap();
        let loss = forward_corrected_loss(logits, &noisy_labels, &t).unwrap().loss;
        let grads = tape.grad(loss, p.vars());
        let grads: Vec<_> = grads.into_iter().map(|g| g.map(|g| g.value())).collect();
        fwd.adam.step(&mut fwd.store, &grads, 2e-3);
    }

    let naive_acc = naive.accuracy(&test_images, &test_labels).unwrap();
    let fwd_acc = fwd.accuracy(&test_images, &test_labels).unwrap();
    let naive_train_fit = naive.accuracy(&train_images, &noisy_labels).unwrap();
    // the naive classifier has begun fitting the corrupted labels
    assert!(
        naive_train_fit > 0.8,
        "naive classifier did not memorize (fit {naive_train_fit})"
    );
    assert!(
        fwd_acc > naive_acc,
        "forward {fwd_acc} should beat naive {naive_acc}"
    );
}

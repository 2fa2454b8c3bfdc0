use super::*;
use crate::noise::{NoiseKind, NoiseSpec};
use crate::robust::PeerClassifier;
use crate::rng::stream;

fn small_spec() -> SyntheticShapesSpec {
    SyntheticShapesSpec {
        num_domains: 3,
        samples_per_domain: 22,
        image_size: 16,
        seed: 7,
        ..Default::default()
    }
}

#[test]
fn synthetic_generation_is_deterministic_and_in_range() {
    let a = generate_synthetic(&small_spec()).unwrap();
    let b = generate_synthetic(&small_spec()).unwrap();
    assert_eq!(a.len(), 66);
    for (sa, sb) in a.samples().iter().zip(b.samples()) {
        assert_eq!(sa.image, sb.image, "bit-identical datasets");
        assert_eq!(sa.sample_id, sb.sample_id);
    }
    for s in a.samples() {
        let min = s.image.iter().cloned().fold(f32::INFINITY, f32::min);
        let max = s.image.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert!(min >= -1.0 && max <= 1.0, "range [{min}, {max}]");
    }
}

#[test]
fn stratified_split_matches_global_floor_arithmetic() {
    // 8 domains x 603 images = 4824; a 0.9 split must give 4341 / 483
    let counts = vec![603usize; 8];
    let train = stratified_split_counts(&counts, 0.9);
    let total: usize = train.iter().sum();
    assert_eq!(total, 4341);
    assert_eq!(4824 - total, 483);
    // per-domain counts stay within one of each other (stratification)
    let min = train.iter().min().unwrap();
    let max = train.iter().max().unwrap();
    assert!(max - min <= 1);
}

#[test]
fn split_is_disjoint_exhaustive_and_seed_stable() {
    let mut d = generate_synthetic(&small_spec()).unwrap();
    d.split(10.0 / 11.0, 3).unwrap();
    assert_eq!(d.train_view().len(), 60);
    assert_eq!(d.eval_view().len(), 6);

    let manifest_a = d.split_manifest();
    let mut d2 = generate_synthetic(&small_spec()).unwrap();
    d2.split(10.0 / 11.0, 3).unwrap();
    assert_eq!(manifest_a, d2.split_manifest(), "same seed, same split");

    let mut ids: Vec<String> = manifest_a.assignment.keys().cloned().collect();
    ids.sort();
    assert_eq!(ids.len(), 66, "split is exhaustive with no duplicates");
}

#[test]
fn split_manifest_roundtrips() {
    let mut d = generate_synthetic(&small_spec()).unwrap();
    d.split(0.9, 0).unwrap();
    let manifest = d.split_manifest();
    let dir = std::env::temp_dir().join("rmit-datasets-test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("split.json");
    manifest.save(&path).unwrap();
    assert_eq!(SplitManifest::load(&path).unwrap(), manifest);
}

#[test]
fn corruption_touches_train_labels_only_and_is_audited() {
    let mut d = generate_synthetic(&small_spec()).unwrap();
    d.split(10.0 / 11.0, 3).unwrap();
    let noise = NoiseSpec {
        kind: NoiseKind::Symmetric,
        rate: 0.5,
        num_domains: 3,
    };
    let sidecar = d.corrupt_train(&noise, 11).unwrap();
    assert_eq!(sidecar.assignments.len(), 60);

    // train view exposes noisy labels; a fair fraction must differ from clean
    let noisy = d.train_view().noisy_labels();
    let flipped = sidecar
        .assignments
        .values()
        .filter(|a| a.clean != a.noisy)
        .count();
    assert!(flipped > 15, "expected noticeable corruption, got {flipped}");
    assert_eq!(noisy.len(), 60);

    // test labels stay clean
    let (_, clean, noisy) = d.eval_view().batch::<f64>(&(0..6).collect::<Vec<_>>());
    assert_eq!(clean, noisy);

    // the audit record replays the corruption bit-exactly
    for (&idx, id) in d.train_idx.iter().zip(
        d.train_idx
            .iter()
            .map(|&i| &d.samples[i].sample_id),
    ) {
        let pair = &sidecar.assignments[id];
        assert_eq!(pair.noisy, d.samples[idx].noisy_label);
        assert_eq!(pair.clean, d.samples[idx].clean_label);
    }
}

#[test]
fn per_attribute_noise_is_rejected_for_categorical_data() {
    let mut d = generate_synthetic(&small_spec()).unwrap();
    d.split(0.9, 0).unwrap();
    let noise = NoiseSpec {
        kind: NoiseKind::PerAttributeFlip,
        rate: 0.3,
        num_domains: 3,
    };
    assert!(d.corrupt_train(&noise, 0).is_err());
}

#[test]
fn hflip_endpoints_and_double_application() {
    let d = generate_synthetic(&small_spec()).unwrap();
    let mut dd = d;
    dd.split(0.9, 1).unwrap();
    let (batch, _) = dd.train_view().batch::<f64>(&[0, 1, 2, 3]);

    let same = augment_hflip(&batch, 0.0, &mut stream(0, "flip", 0));
    assert_eq!(same, batch);

    let flipped = augment_hflip(&batch, 1.0, &mut stream(0, "flip", 0));
    assert_ne!(flipped, batch);
    let back = augment_hflip(&flipped, 1.0, &mut stream(0, "flip", 1));
    assert_eq!(back, batch, "double flip is the identity, pixel-exact");
}

#[test]
fn hflip_monte_carlo_rate() {
    let d = generate_synthetic(&SyntheticShapesSpec {
        samples_per_domain: 2,
        ..small_spec()
    })
    .unwrap();
    // count flips over many draws on a 2-image batch
    let mut dd = d;
    dd.split(1.0, 0).unwrap();
    let (batch, _) = dd.train_view().batch::<f64>(&[0, 1]);
    let mut rng = stream(5, "flip-mc", 0);
    let mut flips = 0usize;
    let trials = 50_000usize;
    for _ in 0..trials {
        let out = augment_hflip(&batch, 0.5, &mut rng);
        for i in 0..2 {
            if out.index_axis(ndarray::Axis(0), i) != batch.index_axis(ndarray::Axis(0), i) {
                flips += 1;
            }
        }
    }
    let frac = flips as f64 / (2 * trials) as f64;
    assert!((0.49..=0.51).contains(&frac), "flip fraction {frac}");
}

#[test]
fn folder_export_load_roundtrip() {
    let mut d = generate_synthetic(&SyntheticShapesSpec {
        num_domains: 3,
        samples_per_domain: 4,
        image_size: 16,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    d.split(1.0, 0).unwrap();
    let dir = std::env::temp_dir().join("rmit-folder-test");
    let _ = std::fs::remove_dir_all(&dir);
    export_image_folder(&d, &dir).unwrap();

    let (loaded, stats) = load_image_folder(&dir, 16).unwrap();
    assert_eq!(stats.loaded, 12);
    assert_eq!(stats.skipped_unreadable, 0);
    assert_eq!(loaded.num_domains, 3);
    assert_eq!(loaded.domain_names, vec!["d0", "d1", "d2"]);

    // labels come from subdirectory names in lexicographic order; pixel
    // values survive the u8 roundtrip within quantization error
    for s in loaded.samples() {
        let orig = d
            .samples()
            .iter()
            .find(|o| s.sample_id.starts_with(&format!("d{}", o.clean_label)))
            .unwrap();
        assert_eq!(s.clean_label, orig.clean_label);
    }
    let orig_first = &d.samples()[0];
    let loaded_first = loaded
        .samples()
        .iter()
        .find(|s| s.sample_id == format!("{}.png", orig_first.sample_id))
        .unwrap();
    let max_err = orig_first
        .image
        .iter()
        .zip(loaded_first.image.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max_err <= 1.0 / 127.0, "quantization error {max_err}");
}

#[test]
fn folder_loader_rejects_missing_or_empty_roots() {
    let missing = std::path::Path::new("/nonexistent/rmit-folder");
    assert!(load_image_folder(missing, 16).is_err());

    let empty = std::env::temp_dir().join("rmit-empty-root");
    let _ = std::fs::remove_dir_all(&empty);
    std::fs::create_dir_all(empty.join("domain_a")).unwrap();
    // domain_a exists but has no readable images
    assert!(load_image_folder(&empty, 16).is_err());
}

/// The domains are separable by construction: a small CNN reaches >= 99%
/// held-out accuracy on clean labels.
#[test]
fn clean_classifier_reaches_99_percent() {
    let mut d = generate_synthetic(&SyntheticShapesSpec {
        num_domains: 3,
        samples_per_domain: 80,
        image_size: 16,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    d.split(0.8, 0).unwrap();
    let train = d.eval_train_view();
    let (images, labels, _) = train.batch::<f32>(&(0..train.len()).collect::<Vec<_>>());
    let test = d.eval_view();
    let (test_images, test_labels, _) = test.batch::<f32>(&(0..test.len()).collect::<Vec<_>>());

    let config = crate::networks::SmallCnnConfig {
        image_size: 16,
        image_channels: 3,
        num_classes: 3,
        width: 12,
    };
    let mut cls = PeerClassifier::<f32>::build(config, &mut stream(9, "evalcls", 0)).unwrap();
    let all: Vec<usize> = (0..labels.len()).collect();
    for _ in 0..120 {
        cls.train_on_subset(&images, &labels, &all, 3e-3).unwrap();
    }
    let acc = cls.accuracy(&test_images, &test_labels).unwrap();
    assert!(acc >= 0.99, "held-out accuracy {acc}");
}

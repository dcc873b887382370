//! End-to-end runs wiring the modules together: synthesize, train, export,
//! compare checkpoints, evaluate heads, explain predictions.

use std::collections::BTreeSet;

use tunescope_core::data::{synthesize_dataset, SynthParams, TextureClass};
use tunescope_core::divergence::diverge_checkpoints;
use tunescope_core::evaluation::{run_experiment, stratified_folds, FeatureSource, HeadSpec};
use tunescope_core::explainer::{explain_instance, LimeConfig, Segmenter};
use tunescope_core::predictors::{train_reference, Predictor, ReferenceNet, TrainConfig};
use tunescope_core::tensors::{read_checkpoint, write_checkpoint};

fn small_dataset(seed: u64) -> tunescope_core::data::Dataset {
    let counts = [
        (TextureClass::Flat, 12),
        (TextureClass::Ripple, 12),
        (TextureClass::Rocky, 12),
        (TextureClass::Crater, 12),
    ];
    synthesize_dataset(&counts, 32, seed, &SynthParams::default()).unwrap()
}

#[test]
fn frozen_layer_shows_zero_divergence_after_training() {
    let data = small_dataset(41);
    let input_dim = 32 * 32;
    let mut net = ReferenceNet::new(input_dim, 16, 4, 7).unwrap();
    let initial = net.export_checkpoint();

    let cfg = TrainConfig {
        epochs: 10,
        learning_rate: 1e-2,
        freeze: ["fc1".to_string()].into_iter().collect(),
        seed: 3,
        ..TrainConfig::default()
    };
    train_reference(&mut net, &data.images, &cfg).unwrap();
    let trained = net.export_checkpoint();

    let report =
        diverge_checkpoints(&trained, &initial, &BTreeSet::new(), 50, 1e-10).unwrap();
    let fc1 = report.layers.iter().find(|l| l.layer == "fc1").unwrap();
    let fc2 = report.layers.iter().find(|l| l.layer == "fc2").unwrap();
    assert_eq!(fc1.kl, 0.0);
    assert_eq!(fc1.ed, 0.0);
    assert!(fc2.kl > 0.0);
    assert!(fc2.ed > 0.0);
    assert_eq!(report.max_kl_layer, "fc2");
}

#[test]
fn checkpoint_file_round_trip_preserves_divergence_zero() {
    let net = ReferenceNet::new(64, 8, 4, 1).unwrap();
    let ckpt = net.export_checkpoint();
    let mut bytes = Vec::new();
    write_checkpoint(&ckpt, &mut bytes).unwrap();
    let back = read_checkpoint(&mut bytes.as_slice()).unwrap();
    let report = diverge_checkpoints(&ckpt, &back, &BTreeSet::new(), 20, 1e-10).unwrap();
    for layer in &report.layers {
        assert_eq!(layer.kl, 0.0);
        assert_eq!(layer.ed, 0.0);
    }
}

#[test]
fn evaluation_runs_all_heads_on_synthetic_features() {
    let data = small_dataset(10);
    let net = ReferenceNet::new(32 * 32, 24, 4, 5).unwrap();
    let plan = stratified_folds(&data.labels(), 3, 2).unwrap();
    let heads = [
        HeadSpec::Knn { k: 3 },
        HeadSpec::Svm {
            c_slack: 1.0,
            epochs: 10,
        },
        HeadSpec::Softmax(TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        }),
    ];
    for head in &heads {
        let report = run_experiment(
            &data,
            &FeatureSource::Penultimate(&net),
            head,
            &plan,
            true,
            9,
        )
        .unwrap();
        assert_eq!(report.folds.len(), 3);
        assert!(report.accuracy.mean >= 0.0 && report.accuracy.mean <= 1.0);
        for fold in &report.folds {
            let row_total: usize = fold.metrics.confusion.iter().flatten().sum();
            assert_eq!(row_total, fold.test_indices.len());
        }
        // The table renders a line per class plus the accuracy header.
        let table = report.render_table();
        assert_eq!(table.lines().count(), 2 + data.class_count());
    }
}

#[test]
fn explanation_of_reference_net_is_reproducible_and_capped() {
    let data = small_dataset(77);
    let image = &data.images[13].image; // a ripple image
    let net = ReferenceNet::new(32 * 32, 16, 4, 3).unwrap();
    let cfg = LimeConfig {
        num_samples: 200,
        max_features: 4,
        seed: 11,
        ..LimeConfig::default()
    };
    let segmenter = Segmenter::Slic {
        target_segments: 20,
        compactness: 10.0,
        iterations: 5,
        seed: 4,
    };
    let (map_a, exps_a) = explain_instance(image, &net, &segmenter, &cfg, &[]).unwrap();
    let (map_b, exps_b) = explain_instance(image, &net, &segmenter, &cfg, &[]).unwrap();
    assert_eq!(map_a.labels, map_b.labels);
    assert_eq!(
        serde_json::to_string(&exps_a).unwrap(),
        serde_json::to_string(&exps_b).unwrap()
    );
    assert!(exps_a[0].feature_weights.len() <= 4);
    // Default target class is the argmax of f(x).
    let fx = net.predict(std::slice::from_ref(image)).unwrap();
    let top = fx[0]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!(exps_a[0].target_class, top);
}

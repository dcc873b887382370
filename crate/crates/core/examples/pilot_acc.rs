// Pilot: softmax head on untrained-net features, balanced 4x50 @ 64, 3-fold.
use tunescope_core::data::{synthesize_dataset, SynthParams, TextureClass};
use tunescope_core::evaluation::{run_experiment, stratified_folds, FeatureSource, HeadSpec};
use tunescope_core::predictors::{ReferenceNet, TrainConfig};

fn main() {
    let counts = [
        (TextureClass::Flat, 50),
        (TextureClass::Ripple, 50),
        (TextureClass::Rocky, 50),
        (TextureClass::Crater, 50),
    ];
    for seed in [1u64, 2, 3] {
        for lr in [1e-4, 1e-3, 1e-2] {
            let data = synthesize_dataset(&counts, 64, seed, &SynthParams::default()).unwrap();
            let net = ReferenceNet::new(64 * 64, 64, 4, seed + 100).unwrap();
            let plan = stratified_folds(&data.labels(), 3, seed).unwrap();
            let head = HeadSpec::Softmax(TrainConfig { epochs: 30, learning_rate: lr, ..TrainConfig::default() });
            let rep = run_experiment(&data, &FeatureSource::Penultimate(&net), &head, &plan, false, seed).unwrap();
            println!("seed {seed} lr {lr:>7}: mean acc {:.3} +- {:.3}", rep.accuracy.mean, rep.accuracy.std);
        }
    }
}

//! Acceptance suite: ten pinned criteria covering KL correctness, local
//! explanation recovery and localization, the frozen-layer divergence
//! structure, gradient checks, stratification, balanced sampling, the
//! minority-recall direction under balancing, format fidelity, and metric
//! identities. Each test prints one pass line (run with `--nocapture` to see
//! them) and enforces its runtime budget.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tunescope_core::data::{
    read_pgm, synthesize_dataset, write_pgm, GrayImage, SynthParams, TextureClass,
};
use tunescope_core::divergence::{
    diverge_checkpoints, estimate_histogram_pair, kl_divergence, ProbabilityHistogram,
};
use tunescope_core::evaluation::{
    balanced_sampler, confusion_and_metrics, run_experiment, stratified_folds, FeatureSource,
    HeadSpec,
};
use tunescope_core::explainer::{
    explain_instance, fit_local_model, locality_kernel, LimeConfig, PerturbationSet, Segmenter,
};
use tunescope_core::predictors::{
    softmax_head, train_reference, Concurrency, Predictor, ReferenceNet, TrainConfig,
};
use tunescope_core::seeds;
use tunescope_core::tensors::{
    read_checkpoint, write_checkpoint, write_checkpoint_file, Checkpoint, NamedTensor, TensorKind,
};

fn finish(criterion: &str, start: Instant, budget: Duration, detail: &str) {
    let elapsed = start.elapsed();
    println!(
        "acceptance {criterion}: PASS in {:.2}s (budget {:.0}s){}{}",
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        if detail.is_empty() { "" } else { " - " },
        detail
    );
    assert!(
        elapsed <= budget,
        "{criterion} exceeded its runtime budget: {elapsed:?} > {budget:?}"
    );
}

// ---------------------------------------------------------------------------

#[test]
fn c01_kl_correctness() {
    let start = Instant::now();

    // D_KL(p, p) = 0 exactly for 100 seeded random smoothed histograms.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..400);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-30.0..30.0)).collect();
        let bins = rng.gen_range(1..80);
        let (p, _) = estimate_histogram_pair(&values, &values, bins, 1e-10).unwrap();
        p.validate().unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0, "seed {seed}");
    }

    // D_KL >= 0 for 1,000 seeded random pairs over shared edges.
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        let na = rng.gen_range(2..200);
        let nb = rng.gen_range(2..200);
        let a: Vec<f64> = (0..na).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let bins = rng.gen_range(1..60);
        let (p, q) = estimate_histogram_pair(&a, &b, bins, 1e-10).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        assert!(kl >= 0.0, "seed {seed}: kl = {kl}");
    }

    // Two-bin example, evaluated directly: 0.5*ln(2) + 0.5*ln(2/3).
    let p = ProbabilityHistogram {
        edges: vec![0.0, 0.5, 1.0],
        mass: vec![0.5, 0.5],
    };
    let q = ProbabilityHistogram {
        edges: vec![0.0, 0.5, 1.0],
        mass: vec![0.25, 0.75],
    };
    let kl = kl_divergence(&p, &q).unwrap();
    assert!(
        (kl - 0.14384103622589042).abs() < 1e-9,
        "two-bin example: {kl}"
    );

    finish("01 KL-correctness", start, Duration::from_secs(1), "");
}

// ---------------------------------------------------------------------------

/// Independent weighted-normal-equations solver (Gaussian elimination with
/// partial pivoting); the oracle side of the dual-route check.
fn oracle_weighted_fit(
    masks: &[Vec<bool>],
    y: &[f64],
    weights: &[f64],
    lambda: f64,
) -> (Vec<f64>, f64) {
    let s = masks[0].len();
    let cols = s + 1;
    let mut ata = vec![vec![0.0f64; cols]; cols];
    let mut atb = vec![0.0f64; cols];
    for (i, mask) in masks.iter().enumerate() {
        let mut row: Vec<f64> = mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        row.push(1.0);
        for a in 0..cols {
            for b in 0..cols {
                ata[a][b] += weights[i] * row[a] * row[b];
            }
            atb[a] += weights[i] * row[a] * y[i];
        }
    }
    // Ridge on the segment weights only; intercept unpenalized.
    for (j, row) in ata.iter_mut().enumerate().take(s) {
        row[j] += lambda;
    }
    let n = cols;
    let mut m = ata;
    let mut v = atb;
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if m[r][col].abs() > m[pivot][col].abs() {
                pivot = r;
            }
        }
        m.swap(col, pivot);
        v.swap(col, pivot);
        let diag = m[col][col];
        assert!(diag.abs() > 1e-12, "oracle system singular");
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = m[r][col] / diag;
            for c in col..n {
                m[r][c] -= factor * m[col][c];
            }
            v[r] -= factor * v[col];
        }
    }
    let mut solution = vec![0.0; n];
    for i in 0..n {
        solution[i] = v[i] / m[i][i];
    }
    let intercept = solution[n - 1];
    solution.truncate(s);
    (solution, intercept)
}

fn full_enumeration(s: usize) -> Vec<Vec<bool>> {
    let mut masks = vec![vec![true; s]];
    for bits in 0..(1usize << s) {
        let mask: Vec<bool> = (0..s).map(|j| bits >> j & 1 == 1).collect();
        if mask.iter().all(|&b| b) {
            continue;
        }
        masks.push(mask);
    }
    masks
}

#[test]
fn c02_lime_exact_recovery() {
    let start = Instant::now();
    for trial in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(20_000 + trial);
        let s = rng.gen_range(1..=8usize);
        let intercept_true = rng.gen_range(0.2..0.4);
        let coeffs_true: Vec<f64> = (0..s)
            .map(|_| rng.gen_range(-0.2 / s as f64..0.4 / s as f64))
            .collect();

        let masks = full_enumeration(s);
        let y: Vec<f64> = masks
            .iter()
            .map(|m| {
                intercept_true
                    + m.iter()
                        .zip(&coeffs_true)
                        .map(|(&on, &c)| if on { c } else { 0.0 })
                        .sum::<f64>()
            })
            .collect();
        let cfg = LimeConfig {
            num_samples: masks.len().max(s + 1),
            max_features: s,
            ridge_lambda: 0.0,
            ..LimeConfig::default()
        };
        let kernel_weights: Vec<f64> = masks.iter().map(|m| locality_kernel(m, &cfg)).collect();
        let pset = PerturbationSet {
            masks: masks.clone(),
            responses: y.iter().map(|&p| vec![1.0 - p, p]).collect(),
            kernel_weights: kernel_weights.clone(),
        };
        let exp = fit_local_model(&pset, 1, &cfg).unwrap();

        // Truth recovery within 1e-8.
        assert!(
            (exp.intercept - intercept_true).abs() < 1e-8,
            "trial {trial}: intercept {} vs {}",
            exp.intercept,
            intercept_true
        );
        for f in &exp.feature_weights {
            let truth = coeffs_true[f.segment as usize];
            assert!(
                (f.weight - truth).abs() < 1e-8,
                "trial {trial} segment {}: {} vs {}",
                f.segment,
                f.weight,
                truth
            );
        }

        // Oracle agreement within 1e-8.
        let (oracle_w, oracle_b) = oracle_weighted_fit(&masks, &y, &kernel_weights, 0.0);
        assert!((exp.intercept - oracle_b).abs() < 1e-8);
        for f in &exp.feature_weights {
            assert!(
                (f.weight - oracle_w[f.segment as usize]).abs() < 1e-8,
                "trial {trial}: oracle disagreement on segment {}",
                f.segment
            );
        }
    }
    finish(
        "02 LIME-exact-recovery",
        start,
        Duration::from_secs(10),
        "50 linear predictors",
    );
}

// ---------------------------------------------------------------------------

/// Detector whose class-1 probability rises with the high-frequency energy
/// inside a designated quadrant, self-calibrated on the unperturbed image.
struct QuadrantDetector {
    x_range: (usize, usize),
    y_range: (usize, usize),
    midpoint: f64,
    scale: f64,
}

impl QuadrantDetector {
    fn energy(&self, img: &GrayImage) -> f64 {
        let mut sum = 0.0;
        let mut count = 0.0;
        for y in self.y_range.0..self.y_range.1 - 1 {
            for x in self.x_range.0..self.x_range.1 - 1 {
                let v = img.get(x, y) as f64;
                let dx = img.get(x + 1, y) as f64 - v;
                let dy = img.get(x, y + 1) as f64 - v;
                sum += dx * dx + dy * dy;
                count += 1.0;
            }
        }
        sum / count
    }

    fn calibrated(img: &GrayImage, quad: ((usize, usize), (usize, usize))) -> Self {
        let mut det = QuadrantDetector {
            x_range: quad.0,
            y_range: quad.1,
            midpoint: 0.0,
            scale: 1.0,
        };
        let full = det.energy(img);
        det.midpoint = full / 2.0;
        det.scale = (full / 8.0).max(1.0);
        det
    }
}

impl Predictor for QuadrantDetector {
    fn class_count(&self) -> usize {
        2
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::ConcurrentOk
    }

    fn predict(&self, images: &[GrayImage]) -> tunescope_core::Result<Vec<Vec<f64>>> {
        Ok(images
            .iter()
            .map(|img| {
                let e = self.energy(img);
                let p = 1.0 / (1.0 + (-(e - self.midpoint) / self.scale).exp());
                vec![1.0 - p, p]
            })
            .collect())
    }
}

/// A 64x64 flat-noise image whose top-left quadrant carries a grating.
fn quadrant_image(seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = 64usize;
    let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let freq: f64 = rng.gen_range(4.0..9.0);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let omega = std::f64::consts::TAU * freq / size as f64;
    let (sin_t, cos_t) = theta.sin_cos();
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let mut v: f64 = 128.0 + rng.gen_range(-8.0..8.0);
            if x < 32 && y < 32 {
                let proj = x as f64 * cos_t + y as f64 * sin_t;
                v += 45.0 * (omega * proj + phase).sin();
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(size, size, pixels).unwrap()
}

#[test]
fn c03_lime_localization() {
    let start = Instant::now();
    let runs = 100;
    let mut hits = 0;
    for run in 0..runs {
        let img = quadrant_image(seeds::derive(1000, run));
        let detector = QuadrantDetector::calibrated(&img, ((0, 32), (0, 32)));
        let cfg = LimeConfig {
            seed: seeds::derive(2000, run),
            ..LimeConfig::default()
        };
        let segmenter = Segmenter::Slic {
            target_segments: 50,
            compactness: 10.0,
            iterations: 10,
            seed: seeds::derive(3000, run),
        };
        let (segmap, exps) = explain_instance(&img, &detector, &segmenter, &cfg, &[1]).unwrap();
        let top = &exps[0].feature_weights[0];
        let members: Vec<usize> = segmap
            .labels
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l == top.segment)
            .map(|(i, _)| i)
            .collect();
        let inside = members
            .iter()
            .filter(|&&i| (i % 64) < 32 && (i / 64) < 32)
            .count();
        if inside * 2 > members.len() {
            hits += 1;
        }
    }
    assert!(hits >= 95, "quadrant localized in only {hits}/{runs} runs");
    finish(
        "03 LIME-localization",
        start,
        Duration::from_secs(120),
        &format!("{hits}/{runs} runs localized"),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn c04_frozen_layer_divergence_structure() {
    let start = Instant::now();
    let counts = [
        (TextureClass::Flat, 12),
        (TextureClass::Ripple, 12),
        (TextureClass::Rocky, 12),
        (TextureClass::Crater, 12),
    ];
    let data = synthesize_dataset(&counts, 32, 404, &SynthParams::default()).unwrap();
    let input_dim = 32 * 32;

    let train = |freeze: &[&str]| -> (Checkpoint, Checkpoint) {
        let mut net = ReferenceNet::new(input_dim, 16, 4, 77).unwrap();
        let initial = net.export_checkpoint();
        let cfg = TrainConfig {
            epochs: 8,
            learning_rate: 1e-2,
            freeze: freeze.iter().map(|s| s.to_string()).collect(),
            seed: 5,
            ..TrainConfig::default()
        };
        train_reference(&mut net, &data.images, &cfg).unwrap();
        (initial, net.export_checkpoint())
    };

    // Baseline mode: only the output layer updates.
    let (initial, baseline) = train(&["fc1"]);
    let report =
        diverge_checkpoints(&baseline, &initial, &BTreeSet::new(), 100, 1e-10).unwrap();
    let layer = |name: &str| report.layers.iter().find(|l| l.layer == name).unwrap();
    assert_eq!(layer("fc1").kl, 0.0, "baseline fc1 KL must be exactly zero");
    assert_eq!(layer("fc1").ed, 0.0, "baseline fc1 ED must be exactly zero");
    assert!(layer("fc2").kl > 0.0, "baseline fc2 KL must be positive");

    // Fine-tune-all mode: both layers move.
    let (initial, tuned) = train(&[]);
    let report = diverge_checkpoints(&tuned, &initial, &BTreeSet::new(), 100, 1e-10).unwrap();
    for l in &report.layers {
        assert!(l.kl > 0.0, "fine-tune-all: layer {} KL = {}", l.layer, l.kl);
        assert!(l.ed > 0.0, "fine-tune-all: layer {} ED = {}", l.layer, l.ed);
    }

    finish(
        "04 frozen-layer-divergence",
        start,
        Duration::from_secs(300),
        "",
    );
}

// ---------------------------------------------------------------------------

#[test]
fn c05_gradient_checks() {
    let start = Instant::now();
    // Central differences at this step carry ~1e-11 float noise; components
    // below the 1e-5 denominator floor are held to the equivalent absolute
    // bound so the 1e-5 relative criterion stays meaningful near zero.
    let h = 1e-5;
    let groups = ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"];
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + instance);

        // Reference net.
        let net = ReferenceNet::new(8, 6, 3, instance).unwrap();
        let images: Vec<GrayImage> = (0..3)
            .map(|_| GrayImage::new(8, 1, (0..8).map(|_| rng.gen()).collect()).unwrap())
            .collect();
        let labels: Vec<usize> = (0..3).map(|_| rng.gen_range(0..3)).collect();
        let (_, grads) = net.loss_and_gradients(&images, &labels).unwrap();
        for group in groups {
            let idx = rng.gen_range(0..net.param_group_len(group));
            let mut probe = net.clone();
            let orig = probe.param(group, idx);
            probe.set_param(group, idx, orig + h);
            let plus = probe.loss_on(&images, &labels).unwrap();
            probe.set_param(group, idx, orig - h);
            let minus = probe.loss_on(&images, &labels).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let analytic = match group {
                "fc1.weight" => grads.fc1_weight[idx],
                "fc1.bias" => grads.fc1_bias[idx],
                "fc2.weight" => grads.fc2_weight[idx],
                _ => grads.fc2_bias[idx],
            };
            let denom = fd.abs().max(analytic.abs()).max(1e-5);
            assert!(
                (fd - analytic).abs() / denom < 1e-5,
                "net instance {instance} {group}[{idx}]: fd={fd} analytic={analytic}"
            );
        }

        // Softmax head.
        let features: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..6).map(|_| rng.gen_range(0..3)).collect();
        let cfg = TrainConfig {
            epochs: 1,
            seed: instance,
            ..TrainConfig::default()
        };
        let head = softmax_head(&features, &labels, &cfg).unwrap();
        let batch: Vec<usize> = (0..features.len()).collect();
        let (_, gw, gb) = head.loss_and_gradients(&features, &labels, &batch).unwrap();
        for (group, grads) in [("weight", &gw), ("bias", &gb)] {
            let idx = rng.gen_range(0..head.param_group_len(group));
            let mut probe = head.clone();
            let orig = probe.param(group, idx);
            probe.set_param(group, idx, orig + h);
            let plus = probe.loss_on(&features, &labels, &batch).unwrap();
            probe.set_param(group, idx, orig - h);
            let minus = probe.loss_on(&features, &labels, &batch).unwrap();
            let fd = (plus - minus) / (2.0 * h);
            let denom = fd.abs().max(grads[idx].abs()).max(1e-5);
            assert!(
                (fd - grads[idx]).abs() / denom < 1e-5,
                "head instance {instance} {group}[{idx}]"
            );
        }
    }
    finish("05 gradient-checks", start, Duration::from_secs(10), "");
}

// ---------------------------------------------------------------------------

#[test]
fn c06_stratification() {
    let start = Instant::now();
    for trial in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(60_000 + trial);
        let classes = rng.gen_range(2..=6usize);
        let k = rng.gen_range(2..=5usize);
        let mut labels = Vec::new();
        let mut totals = vec![0usize; classes];
        for c in 0..classes {
            let n = rng.gen_range(k..=k * 8);
            totals[c] = n;
            labels.extend(std::iter::repeat(c).take(n));
        }
        // Shuffle sample order so assignment is not positional.
        use rand::seq::SliceRandom;
        labels.shuffle(&mut rng);
        let mut totals = vec![0usize; classes];
        for &l in &labels {
            totals[l] += 1;
        }

        let plan = stratified_folds(&labels, k, trial).unwrap();
        for fold in 0..k {
            for c in 0..classes {
                let exact = totals[c] as f64 / k as f64;
                let got = plan.fold_census[fold][c] as f64;
                assert!(
                    (got - exact).abs() <= 1.0,
                    "trial {trial} fold {fold} class {c}: {got} vs {exact}"
                );
            }
        }
    }
    finish(
        "06 stratification",
        start,
        Duration::from_secs(5),
        "200 label sets",
    );
}

// ---------------------------------------------------------------------------

#[test]
fn c07_balanced_sampler_frequencies() {
    let start = Instant::now();
    let labels: Vec<usize> = [vec![0usize; 80], vec![1; 10], vec![2; 5], vec![3; 5]].concat();

    // Balancing ON: weighted draws, every class near 1/4.
    let draws = balanced_sampler(&labels, 10_000, 7).unwrap();
    let mut counts = [0usize; 4];
    for &i in &draws {
        counts[labels[i]] += 1;
    }
    for (class, &count) in counts.iter().enumerate() {
        let freq = count as f64 / draws.len() as f64;
        assert!(
            (freq - 0.25).abs() <= 0.03,
            "balanced class {class} frequency {freq}"
        );
    }

    // Balancing OFF: the training stream is epoch-shuffled passes over the
    // data, so the majority class keeps its raw share.
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut stream = Vec::with_capacity(10_000);
    while stream.len() < 10_000 {
        let mut epoch: Vec<usize> = (0..labels.len()).collect();
        epoch.shuffle(&mut rng);
        stream.extend(epoch);
    }
    stream.truncate(10_000);
    let majority = stream.iter().filter(|&&i| labels[i] == 0).count() as f64 / 10_000.0;
    assert!(
        (majority - 0.80).abs() <= 0.03,
        "unbalanced majority frequency {majority}"
    );

    finish(
        "07 balanced-sampler",
        start,
        Duration::from_secs(1),
        &format!("balanced freqs {counts:?}"),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn c08_balancing_improves_minority_recall() {
    let start = Instant::now();
    let counts = [
        (TextureClass::Flat, 80),
        (TextureClass::Ripple, 10),
        (TextureClass::Rocky, 5),
        (TextureClass::Crater, 5),
    ];
    let crater = TextureClass::Crater.label();
    let mut recall_on = Vec::new();
    let mut recall_off = Vec::new();
    for master in 0..5u64 {
        let data = synthesize_dataset(
            &counts,
            64,
            seeds::derive(8000, master),
            &SynthParams::default(),
        )
        .unwrap();
        // Feature extractor: a briefly fine-tuned reference net, shared by
        // both arms so the comparison isolates the sampler.
        let mut net = ReferenceNet::new(64 * 64, 64, 4, seeds::derive(8100, master)).unwrap();
        let net_cfg = TrainConfig {
            epochs: 10,
            learning_rate: 1e-2,
            seed: seeds::derive(8150, master),
            ..TrainConfig::default()
        };
        train_reference(&mut net, &data.images, &net_cfg).unwrap();
        let plan = stratified_folds(&data.labels(), 3, seeds::derive(8200, master)).unwrap();
        let head = HeadSpec::Softmax(TrainConfig {
            epochs: 30,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        });
        let features = FeatureSource::Penultimate(&net);
        let on = run_experiment(&data, &features, &head, &plan, true, seeds::derive(8300, master))
            .unwrap();
        let off =
            run_experiment(&data, &features, &head, &plan, false, seeds::derive(8300, master))
                .unwrap();
        recall_on.push(on.recall[crater].mean);
        recall_off.push(off.recall[crater].mean);
    }
    let mean_on = recall_on.iter().sum::<f64>() / recall_on.len() as f64;
    let mean_off = recall_off.iter().sum::<f64>() / recall_off.len() as f64;
    assert!(
        mean_on >= mean_off,
        "balanced crater recall {mean_on:.3} < unbalanced {mean_off:.3} (per-seed on: {recall_on:?}, off: {recall_off:?})"
    );
    finish(
        "08 minority-recall-direction",
        start,
        Duration::from_secs(600),
        &format!("crater recall balanced {mean_on:.3} vs unbalanced {mean_off:.3}"),
    );
}

// ---------------------------------------------------------------------------

#[test]
fn c09_format_fidelity_and_protocol_parity() {
    let start = Instant::now();

    // NTF round trips, byte-identical, 100 seeded instances.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(90_000 + seed);
        let layer_count = rng.gen_range(1..4);
        let mut tensors = Vec::new();
        for l in 0..layer_count {
            let n = rng.gen_range(1..40);
            let values: Vec<f32> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            tensors.push(
                NamedTensor::new(
                    format!("layer{l}.weight"),
                    TensorKind::Weight,
                    vec![n],
                    values,
                )
                .unwrap(),
            );
        }
        let mut metadata = std::collections::BTreeMap::new();
        metadata.insert("model_id".to_string(), format!("m{seed}"));
        metadata.insert("created_by".to_string(), "acceptance".to_string());
        let ckpt = Checkpoint::new(tensors, metadata).unwrap();
        let mut first = Vec::new();
        write_checkpoint(&ckpt, &mut first).unwrap();
        let back = read_checkpoint(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_checkpoint(&back, &mut second).unwrap();
        assert_eq!(first, second, "NTF seed {seed}");
    }

    // PGM round trips, byte-identical, 100 seeded instances.
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(91_000 + seed);
        let w = rng.gen_range(1..40);
        let h = rng.gen_range(1..40);
        let img = GrayImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap();
        let first = write_pgm(&img);
        let back = read_pgm(&first).unwrap();
        let second = write_pgm(&back);
        assert_eq!(first, second, "PGM seed {seed}");
    }

    // Subprocess predictor equals the in-process predictor to 1e-9.
    let tmp = tempfile::tempdir().unwrap();
    let net = ReferenceNet::new(16 * 16, 12, 4, 5).unwrap();
    let ckpt_path = tmp.path().join("net.ntf");
    write_checkpoint_file(&net.export_checkpoint(), &ckpt_path).unwrap();
    let serve_cmd = format!(
        "{} predict-serve --checkpoint {}",
        env!("CARGO_BIN_EXE_tunescope"),
        ckpt_path.display()
    );
    let remote = tunescope_cli::protocol::SubprocessPredictor::spawn(&serve_cmd).unwrap();
    assert_eq!(remote.class_count(), 4);
    let mut rng = ChaCha8Rng::seed_from_u64(92);
    let batch: Vec<GrayImage> = (0..16)
        .map(|_| GrayImage::new(16, 16, (0..256).map(|_| rng.gen()).collect()).unwrap())
        .collect();
    let local_rows = net.predict(&batch).unwrap();
    let remote_rows = remote.predict(&batch).unwrap();
    for (lr, rr) in local_rows.iter().zip(&remote_rows) {
        for (l, r) in lr.iter().zip(rr) {
            assert!((l - r).abs() <= 1e-9, "protocol drift: {l} vs {r}");
        }
    }

    finish(
        "09 format-fidelity",
        start,
        Duration::from_secs(30),
        "NTF x100, PGM x100, protocol parity",
    );
}

// ---------------------------------------------------------------------------

#[test]
fn c10_metric_identities() {
    let start = Instant::now();

    // Confusion-derived accuracy equals direct accuracy exactly.
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100_000 + seed);
        let classes = rng.gen_range(2..6);
        let n = rng.gen_range(1..200);
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let m = confusion_and_metrics(&pred, &truth, classes).unwrap();
        let direct =
            pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / n as f64;
        assert_eq!(m.accuracy, direct, "seed {seed}");
        let trace: usize = (0..classes).map(|c| m.confusion[c][c]).sum();
        assert_eq!(m.accuracy, trace as f64 / n as f64);
    }

    // Hand-computed example: TP=3, FP=1, FN=2 -> precision 0.75, recall 0.6.
    let truth = [0, 0, 0, 0, 0, 1, 1, 1];
    let pred = [0, 0, 0, 1, 1, 0, 1, 1];
    let m = confusion_and_metrics(&pred, &truth, 2).unwrap();
    assert_eq!(m.per_class[0].precision, 0.75);
    assert_eq!(m.per_class[0].recall, 0.6);

    finish("10 metric-identities", start, Duration::from_secs(1), "");
}


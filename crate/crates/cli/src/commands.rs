//! Subcommand implementations. Every run resolves its arguments, writes a
//! config echo beside its outputs, and is byte-reproducible under identical
//! arguments and seeds (timestamps live only in the config echo).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use tunescope_core::data::{
    ingest_directory, read_pgm_file, synthesize_dataset, write_dataset_tree, write_pgm_file,
    Dataset, SynthParams, TextureClass,
};
use tunescope_core::divergence::diverge_checkpoints;
use tunescope_core::evaluation::{run_experiment, stratified_folds, FeatureSource, HeadSpec};
use tunescope_core::explainer::{
    explain_instance, render_overlay, LimeConfig, OverlayMode, Segmenter,
};
use tunescope_core::predictors::{train_reference, Predictor, ReferenceNet, TrainConfig};
use tunescope_core::tensors::{read_checkpoint_file, write_checkpoint_file};

use crate::args::{
    DistanceArg, DivergeArgs, EvaluateArgs, ExplainArgs, GenArgs, HeadArg, ModeArg, SegmenterArg,
    TrainArgs,
};
use crate::protocol::SubprocessPredictor;

/// Writes the resolved configuration beside the outputs. The timestamp is
/// confined to this file.
fn write_config_echo(out: &Path, command: &str, resolved: serde_json::Value) -> anyhow::Result<()> {
    let unix_time = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let echo = json!({
        "command": command,
        "unix_time": unix_time,
        "resolved": resolved,
    });
    fs::write(out.join("config.json"), serde_json::to_vec_pretty(&echo)?)?;
    Ok(())
}

fn ensure_out_dir(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let report = ingest_directory(path)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.dataset.is_empty() {
        bail!("dataset at {} holds no readable images", path.display());
    }
    Ok(report.dataset)
}

pub fn cmd_gen(args: &GenArgs, seed: u64) -> anyhow::Result<()> {
    let params = SynthParams {
        noise_sigma: args.noise_sigma,
        ..SynthParams::default()
    };
    let counts: Vec<(TextureClass, usize)> = args
        .counts
        .iter()
        .map(|(class, n)| (*class, *n))
        .collect();
    let dataset = synthesize_dataset(&counts, args.size, seed, &params)?;
    ensure_out_dir(&args.out)?;
    let manifest = write_dataset_tree(&dataset, &args.out)?;
    write_config_echo(
        &args.out,
        "gen",
        json!({
            "counts": manifest.census,
            "size": args.size,
            "seed": seed,
            "noise_sigma": args.noise_sigma,
        }),
    )?;
    println!(
        "generated {} images across {} classes under {}",
        dataset.len(),
        dataset.class_count(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_train(args: &TrainArgs, seed: u64) -> anyhow::Result<()> {
    let dataset = load_dataset(&args.data)?;
    let first = &dataset.images[0].image;
    let input_dim = first.len();
    if dataset
        .images
        .iter()
        .any(|i| i.image.width != first.width || i.image.height != first.height)
    {
        bail!("training images must share one size");
    }

    let mut net = ReferenceNet::new(input_dim, args.hidden, dataset.class_count(), seed)?;
    ensure_out_dir(&args.out)?;
    let initial_path = args.out.join("initial.ntf");
    write_checkpoint_file(&net.export_checkpoint(), &initial_path)?;

    let freeze: BTreeSet<String> = args.freeze.iter().cloned().collect();
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        epochs: args.epochs,
        freeze: freeze.clone(),
        seed,
        ..TrainConfig::default()
    };
    let log = train_reference(&mut net, &dataset.images, &cfg)?;
    let final_path = args.out.join("final.ntf");
    write_checkpoint_file(&net.export_checkpoint(), &final_path)?;
    write_json(
        &args.out.join("loss_log.json"),
        &json!({"epochs": cfg.epochs, "loss": log.epoch_loss}),
    )?;
    write_config_echo(
        &args.out,
        "train",
        json!({
            "data": args.data.display().to_string(),
            "hidden": args.hidden,
            "freeze": freeze,
            "epochs": args.epochs,
            "learning_rate": args.learning_rate,
            "batch_size": args.batch_size,
            "seed": seed,
        }),
    )?;
    println!(
        "trained {} epochs; checkpoints at {} and {}",
        args.epochs,
        initial_path.display(),
        final_path.display()
    );
    Ok(())
}

pub fn cmd_diverge(args: &DivergeArgs) -> anyhow::Result<()> {
    let first = read_checkpoint_file(&args.first)?;
    let second = read_checkpoint_file(&args.second)?;
    let exclusion: BTreeSet<String> = args.exclude.iter().cloned().collect();
    let report = diverge_checkpoints(&first, &second, &exclusion, args.bins, args.epsilon)?;
    ensure_out_dir(&args.out)?;
    write_json(&args.out.join("divergence.json"), &report)?;
    let table = report.render_table();
    fs::write(args.out.join("divergence.txt"), &table)?;
    write_config_echo(
        &args.out,
        "diverge",
        json!({
            "first": args.first.display().to_string(),
            "second": args.second.display().to_string(),
            "exclude": exclusion,
            "bins": args.bins,
            "epsilon": args.epsilon,
        }),
    )?;
    print!("{table}");
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs, seed: u64) -> anyhow::Result<()> {
    let dataset = load_dataset(&args.data)?;
    let ckpt = read_checkpoint_file(&args.checkpoint)?;
    let net = ReferenceNet::import_checkpoint(&ckpt)?;
    let plan = stratified_folds(&dataset.labels(), args.folds, seed)?;

    let heads: Vec<(&str, HeadSpec)> = match args.head {
        HeadArg::Knn => vec![("knn", HeadSpec::Knn { k: args.knn_k })],
        HeadArg::Svm => vec![(
            "svm",
            HeadSpec::Svm {
                c_slack: args.svm_c,
                epochs: args.svm_epochs,
            },
        )],
        HeadArg::Fc => vec![("fc", fc_spec(args, seed))],
        HeadArg::All => vec![
            ("knn", HeadSpec::Knn { k: args.knn_k }),
            (
                "svm",
                HeadSpec::Svm {
                    c_slack: args.svm_c,
                    epochs: args.svm_epochs,
                },
            ),
            ("fc", fc_spec(args, seed)),
        ],
    };

    ensure_out_dir(&args.out)?;
    for (name, spec) in &heads {
        let report = run_experiment(
            &dataset,
            &FeatureSource::Penultimate(&net),
            spec,
            &plan,
            args.balanced,
            seed,
        )?;
        write_json(&args.out.join(format!("eval_{name}.json")), &report)?;
        let table = report.render_table();
        fs::write(args.out.join(format!("eval_{name}.txt")), &table)?;
        println!("[{name}]");
        print!("{table}");
    }
    write_config_echo(
        &args.out,
        "evaluate",
        json!({
            "data": args.data.display().to_string(),
            "checkpoint": args.checkpoint.display().to_string(),
            "head": format!("{:?}", args.head).to_lowercase(),
            "balanced": args.balanced,
            "folds": args.folds,
            "knn_k": args.knn_k,
            "svm_c": args.svm_c,
            "svm_epochs": args.svm_epochs,
            "fc_epochs": args.fc_epochs,
            "seed": seed,
        }),
    )?;
    Ok(())
}

fn fc_spec(args: &EvaluateArgs, seed: u64) -> HeadSpec {
    HeadSpec::Softmax(TrainConfig {
        epochs: args.fc_epochs,
        seed,
        ..TrainConfig::default()
    })
}

pub fn cmd_explain(args: &ExplainArgs, seed: u64) -> anyhow::Result<()> {
    let image = read_pgm_file(&args.image)?;

    let predictor: Box<dyn Predictor> = match (&args.checkpoint, &args.predictor_cmd) {
        (Some(path), None) => {
            let ckpt = read_checkpoint_file(path)?;
            Box::new(ReferenceNet::import_checkpoint(&ckpt)?)
        }
        (None, Some(cmd)) => Box::new(SubprocessPredictor::spawn(cmd)?),
        _ => bail!("exactly one of --checkpoint or --predictor-cmd is required"),
    };

    let segmenter = match args.segmenter {
        SegmenterArg::Slic => Segmenter::Slic {
            target_segments: args.segments,
            compactness: args.compactness,
            iterations: args.iterations,
            seed,
        },
        SegmenterArg::Grid => Segmenter::Grid { cell: args.cell },
    };
    let cfg = LimeConfig {
        num_samples: args.samples,
        sigma: args.sigma,
        distance: match args.distance {
            DistanceArg::Cosine => tunescope_core::explainer::DistanceKind::Cosine,
            DistanceArg::Euclidean => tunescope_core::explainer::DistanceKind::Euclidean,
        },
        max_features: args.max_features,
        ridge_lambda: args.ridge_lambda,
        replacement: args.replacement.0,
        seed,
    };

    let (segmap, explanations) =
        explain_instance(&image, predictor.as_ref(), &segmenter, &cfg, &args.classes)?;

    ensure_out_dir(&args.out)?;
    write_json(&args.out.join("explanation.json"), &explanations)?;
    write_pgm_file(&segmap.to_pgm_image(), &args.out.join("segments.pgm"))?;
    for exp in &explanations {
        for mode in &args.modes {
            let overlay_mode = match mode {
                ModeArg::KeepPositive => OverlayMode::KeepPositive,
                ModeArg::Heat => OverlayMode::Heat,
            };
            let overlay = render_overlay(&image, &segmap, exp, overlay_mode);
            let name = format!(
                "overlay_class{}_{}.pgm",
                exp.target_class,
                match mode {
                    ModeArg::KeepPositive => "keep_positive",
                    ModeArg::Heat => "heat",
                }
            );
            write_pgm_file(&overlay, &args.out.join(name))?;
        }
    }
    write_config_echo(
        &args.out,
        "explain",
        json!({
            "image": args.image.display().to_string(),
            "predictor": args
                .checkpoint
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| args.predictor_cmd.clone().unwrap_or_default()),
            "segmenter": format!("{:?}", args.segmenter).to_lowercase(),
            "segments": args.segments,
            "compactness": args.compactness,
            "iterations": args.iterations,
            "cell": args.cell,
            "lime": cfg,
            "classes": args.classes,
            "modes": args.modes.iter().map(|m| format!("{m:?}")).collect::<Vec<_>>(),
            "seed": seed,
        }),
    )?;
    for exp in &explanations {
        println!(
            "class {}: r2 = {:.4}, top segments: {}",
            exp.target_class,
            exp.local_fit_r2,
            exp.feature_weights
                .iter()
                .map(|f| format!("{}({:+.4})", f.segment, f.weight))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    Ok(())
}

pub fn cmd_predict_serve(checkpoint: &PathBuf) -> anyhow::Result<()> {
    let ckpt = read_checkpoint_file(checkpoint)?;
    let net = ReferenceNet::import_checkpoint(&ckpt)?;
    crate::protocol::serve(&net)
}

//! tunescope: generate synthetic texture datasets, train and compare
//! reference-net checkpoints, evaluate classifier heads under class
//! imbalance, and explain single predictions.

use clap::{Parser, Subcommand};

use tunescope_cli::args::{
    DivergeArgs, EvaluateArgs, ExplainArgs, GenArgs, PredictServeArgs, TrainArgs,
};
use tunescope_cli::commands;

#[derive(Parser)]
#[command(
    name = "tunescope",
    version,
    about = "Fine-tuning diagnostics for grayscale image classifiers",
    after_help = "Exit codes: 0 success, 1 runtime error, 2 argument error."
)]
struct Cli {
    #[command(subcommand)]
    command: CommandArg,
}

#[derive(Subcommand)]
enum CommandArg {
    /// Generate a synthetic seafloor-texture dataset tree with a manifest.
    Gen(GenArgs),
    /// Train the reference network; emits initial and final NTF checkpoints.
    Train(TrainArgs),
    /// Compare two checkpoints layer by layer (KL divergence + Euclidean
    /// distance). KL direction is kl(first || second): pass the fine-tuned
    /// checkpoint first and the baseline second.
    Diverge(DivergeArgs),
    /// Stratified cross-validation of classifier heads on penultimate
    /// features, with optional balanced resampling of the training folds.
    Evaluate(EvaluateArgs),
    /// Explain one prediction with a local surrogate model and write
    /// overlay images.
    Explain(ExplainArgs),
    /// Serve a checkpoint as a predictor over the stdin/stdout JSON
    /// protocol (one request per line).
    PredictServe(PredictServeArgs),
}

/// Seeds are mandatory-defaulted: a note is printed whenever the default is
/// used so runs stay attributable.
fn resolve_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => s,
        None => {
            eprintln!("note: --seed not given, defaulting to 0");
            0
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        CommandArg::Gen(args) => commands::cmd_gen(args, resolve_seed(args.seed)),
        CommandArg::Train(args) => commands::cmd_train(args, resolve_seed(args.seed)),
        CommandArg::Diverge(args) => commands::cmd_diverge(args),
        CommandArg::Evaluate(args) => commands::cmd_evaluate(args, resolve_seed(args.seed)),
        CommandArg::Explain(args) => commands::cmd_explain(args, resolve_seed(args.seed)),
        CommandArg::PredictServe(args) => commands::cmd_predict_serve(&args.checkpoint),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

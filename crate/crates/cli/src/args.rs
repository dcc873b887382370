//! Argument structures shared by the binary and the test harnesses.

use std::path::PathBuf;

use clap::{Args, ValueEnum};

use tunescope_core::data::TextureClass;
use tunescope_core::explainer::Replacement;

pub fn parse_counts(s: &str) -> Result<(TextureClass, usize), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected class=count, got '{s}'"))?;
    let class = TextureClass::from_name(name.trim())
        .ok_or_else(|| format!("unknown class '{name}' (flat|ripple|rocky|crater)"))?;
    let count: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("bad count '{value}'"))?;
    Ok((class, count))
}

/// Replacement flag: "segment_mean" or "constant:<gray>".
#[derive(Clone, Debug)]
pub struct ReplacementArg(pub Replacement);

pub fn parse_replacement(s: &str) -> Result<ReplacementArg, String> {
    if s == "segment_mean" {
        return Ok(ReplacementArg(Replacement::SegmentMean));
    }
    if let Some(value) = s.strip_prefix("constant:") {
        let gray: u8 = value
            .parse()
            .map_err(|_| format!("bad gray value '{value}' (0-255)"))?;
        return Ok(ReplacementArg(Replacement::Constant(gray)));
    }
    Err(format!(
        "unknown replacement '{s}' (segment_mean | constant:<gray>)"
    ))
}

#[derive(Args)]
pub struct GenArgs {
    /// Per-class image counts, e.g. flat=80,ripple=10,rocky=5,crater=5.
    #[arg(long, value_parser = parse_counts, value_delimiter = ',', required = true)]
    pub counts: Vec<(TextureClass, usize)>,
    /// Square image size in pixels (minimum 32).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Master seed; per-image seeds derive from it (printed if defaulted).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gaussian pixel-noise standard deviation.
    #[arg(long, default_value_t = 8.0)]
    pub noise_sigma: f64,
    /// Output directory for the dataset tree and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset root (class-per-directory PGM tree).
    #[arg(long)]
    pub data: PathBuf,
    /// Hidden layer width.
    #[arg(long, default_value_t = tunescope_core::predictors::DEFAULT_HIDDEN_DIM)]
    pub hidden: usize,
    /// Layers receiving zero updates; `--freeze fc1` is the baseline mode
    /// that trains only the output layer.
    #[arg(long, value_delimiter = ',')]
    pub freeze: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 6)]
    pub batch_size: usize,
    /// Seed for initialization and batch shuffling (printed if defaulted).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for initial.ntf, final.ntf, and loss_log.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DivergeArgs {
    /// First checkpoint (the KL numerator side, e.g. fine-tuned).
    #[arg(long)]
    pub first: PathBuf,
    /// Second checkpoint (the KL reference side, e.g. baseline).
    #[arg(long)]
    pub second: PathBuf,
    /// Layer ids to exclude, e.g. the replaced output layer.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Additive histogram smoothing applied before normalization.
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
    /// Output directory for divergence.json and divergence.txt.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum HeadArg {
    Knn,
    Svm,
    Fc,
    All,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Dataset root (class-per-directory PGM tree).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint providing the penultimate features.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = HeadArg::All)]
    pub head: HeadArg,
    /// Resample the training folds to balance classes (test folds are never
    /// resampled).
    #[arg(long)]
    pub balanced: bool,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long, default_value_t = 3)]
    pub knn_k: usize,
    /// SVM slack parameter C.
    #[arg(long, default_value_t = 1.0)]
    pub svm_c: f64,
    #[arg(long, default_value_t = 50)]
    pub svm_epochs: usize,
    /// Epochs for the fully connected (softmax) head.
    #[arg(long, default_value_t = 30)]
    pub fc_epochs: usize,
    /// Seed for folds, sampling, and head training (printed if defaulted).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for eval_<head>.json/.txt reports.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SegmenterArg {
    Slic,
    Grid,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DistanceArg {
    Cosine,
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    KeepPositive,
    Heat,
}

#[derive(Args)]
pub struct ExplainArgs {
    /// Grayscale PGM image to explain.
    #[arg(long)]
    pub image: PathBuf,
    /// In-process predictor: an NTF checkpoint of the reference network.
    #[arg(long, conflicts_with = "predictor_cmd")]
    pub checkpoint: Option<PathBuf>,
    /// External predictor: a shell command speaking the stdin/stdout JSON
    /// protocol (see `predict-serve`).
    #[arg(long)]
    pub predictor_cmd: Option<String>,
    #[arg(long, value_enum, default_value_t = SegmenterArg::Slic)]
    pub segmenter: SegmenterArg,
    /// Superpixel target count (slic).
    #[arg(long, default_value_t = 50)]
    pub segments: usize,
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Tile size (grid segmenter).
    #[arg(long, default_value_t = 8)]
    pub cell: usize,
    /// Perturbation sample count.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Locality kernel bandwidth.
    #[arg(long, default_value_t = 0.25)]
    pub sigma: f64,
    #[arg(long, value_enum, default_value_t = DistanceArg::Cosine)]
    pub distance: DistanceArg,
    /// Maximum segments kept in the explanation.
    #[arg(long, default_value_t = 5)]
    pub max_features: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ridge_lambda: f64,
    /// Off-segment fill: segment_mean or constant:<gray>.
    #[arg(long, value_parser = parse_replacement, default_value = "segment_mean")]
    pub replacement: ReplacementArg,
    /// Classes to explain; empty means the predictor's top class.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<usize>,
    /// Overlay renderings to emit (one image per mode per class).
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [ModeArg::KeepPositive, ModeArg::Heat])]
    pub modes: Vec<ModeArg>,
    /// Seed for segmentation and perturbation draws (printed if defaulted).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for explanation.json, segments.pgm, and overlays.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictServeArgs {
    /// NTF checkpoint of the reference network to serve.
    #[arg(long)]
    pub checkpoint: PathBuf,
}

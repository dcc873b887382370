//! LIME for grayscale images: perturb an instance over its superpixels,
//! weight samples by an exponential locality kernel, fit a sparsity-capped
//! locally weighted linear model, and render explanation overlays.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::GrayImage;
use crate::error::{Error, Result};
use crate::predictors::{is_valid_probability_row, Predictor};
use crate::segmentation::{segment_grid, segment_slic, SegmentMap};

/// Distance metric used inside the locality kernel, computed between binary
/// mask vectors (the unperturbed instance is the all-ones vector).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Cosine,
    Euclidean,
}

/// What replaces the pixels of a toggled-off segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    SegmentMean,
    Constant(u8),
}

#[derive(Debug, Clone, Serialize)]
pub struct LimeConfig {
    /// Number of perturbation samples, including the unperturbed instance.
    pub num_samples: usize,
    /// Locality kernel bandwidth.
    pub sigma: f64,
    pub distance: DistanceKind,
    /// Hard cap on explanation size (complexity budget).
    pub max_features: usize,
    pub ridge_lambda: f64,
    pub replacement: Replacement,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            num_samples: 1000,
            sigma: 0.25,
            distance: DistanceKind::Cosine,
            max_features: 5,
            ridge_lambda: 1.0,
            replacement: Replacement::SegmentMean,
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < self.max_features + 1 {
            return Err(Error::invalid(format!(
                "num_samples ({}) must be at least max_features + 1 ({})",
                self.num_samples,
                self.max_features + 1
            )));
        }
        if self.sigma <= 0.0 {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.max_features == 0 {
            return Err(Error::invalid("max_features must be positive"));
        }
        if self.ridge_lambda < 0.0 {
            return Err(Error::invalid("ridge_lambda must be non-negative"));
        }
        Ok(())
    }
}

/// Sampled perturbations: binary masks over segments, the predictor's
/// responses on the masked images, and the locality kernel weights.
#[derive(Debug, Clone)]
pub struct PerturbationSet {
    pub masks: Vec<Vec<bool>>,
    pub responses: Vec<Vec<f64>>,
    pub kernel_weights: Vec<f64>,
}

impl PerturbationSet {
    pub fn validate(&self, segment_count: usize, class_count: usize) -> Result<()> {
        if self.masks.is_empty() {
            return Err(Error::invalid("perturbation set is empty"));
        }
        if !self.masks[0].iter().all(|&b| b) {
            return Err(Error::invalid("first perturbation row must be all-ones"));
        }
        if self.masks.len() != self.responses.len() || self.masks.len() != self.kernel_weights.len()
        {
            return Err(Error::invalid("perturbation set rows are misaligned"));
        }
        for mask in &self.masks {
            if mask.len() != segment_count {
                return Err(Error::invalid("mask width does not match segment count"));
            }
        }
        for row in &self.responses {
            if !is_valid_probability_row(row, class_count) {
                return Err(Error::invalid("response row is not a probability row"));
            }
        }
        if self
            .kernel_weights
            .iter()
            .any(|&w| !(w > 0.0 && w <= 1.0))
        {
            return Err(Error::invalid("kernel weights must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureWeight {
    pub segment: u32,
    pub weight: f64,
}

/// Per-class explanation: signed segment weights of the fitted local linear
/// model, its intercept, and the weighted r-squared fit diagnostic.
#[derive(Debug, Clone, Serialize)]
pub struct Explanation {
    #[serde(rename = "class")]
    pub target_class: usize,
    pub intercept: f64,
    #[serde(rename = "r2")]
    pub local_fit_r2: f64,
    #[serde(rename = "features")]
    pub feature_weights: Vec<FeatureWeight>,
    pub config: LimeConfig,
    pub rank_deficient: bool,
}

/// Segmenter selection for `explain_instance`.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Segmenter {
    Grid {
        cell: usize,
    },
    Slic {
        target_segments: usize,
        compactness: f64,
        iterations: usize,
        seed: u64,
    },
}

impl Segmenter {
    pub fn segment(&self, image: &GrayImage) -> Result<SegmentMap> {
        match *self {
            Segmenter::Grid { cell } => segment_grid(image, cell),
            Segmenter::Slic {
                target_segments,
                compactness,
                iterations,
                seed,
            } => segment_slic(image, target_segments, compactness, iterations, seed),
        }
    }
}

/// Locality kernel pi_x(z) = exp(-D(x, z)^2 / sigma^2), where x is the
/// all-ones mask. A zero mask under cosine distance is defined to have the
/// maximal distance 1.
pub fn locality_kernel(mask: &[bool], cfg: &LimeConfig) -> f64 {
    let s = mask.len() as f64;
    let ones = mask.iter().filter(|&&b| b).count() as f64;
    let d = match cfg.distance {
        DistanceKind::Cosine => {
            if ones == 0.0 {
                1.0
            } else {
                1.0 - (ones / s).sqrt()
            }
        }
        DistanceKind::Euclidean => (s - ones).sqrt(),
    };
    (-(d * d) / (cfg.sigma * cfg.sigma)).exp()
}

/// Builds the masked image for one perturbation row.
fn apply_mask(
    image: &GrayImage,
    segmap: &SegmentMap,
    mask: &[bool],
    segment_means: &[u8],
    replacement: Replacement,
) -> GrayImage {
    let mut out = image.clone();
    for (idx, &label) in segmap.labels.iter().enumerate() {
        if !mask[label as usize] {
            out.pixels[idx] = match replacement {
                Replacement::SegmentMean => segment_means[label as usize],
                Replacement::Constant(v) => v,
            };
        }
    }
    out
}

fn segment_means(image: &GrayImage, segmap: &SegmentMap) -> Vec<u8> {
    let mut sums = vec![0u64; segmap.segment_count];
    let mut counts = vec![0u64; segmap.segment_count];
    for (idx, &label) in segmap.labels.iter().enumerate() {
        sums[label as usize] += image.pixels[idx] as u64;
        counts[label as usize] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| ((s as f64 / c as f64).round() as i64).clamp(0, 255) as u8)
        .collect()
}

const PREDICT_BATCH: usize = 64;

/// Draws perturbation masks, queries the predictor on the masked images, and
/// attaches kernel weights.
///
/// Row 0 is always the unperturbed instance (all-ones mask); the remaining
/// rows draw each mask bit independently uniform over {0, 1}. Deterministic
/// given `cfg.seed`. Predictor calls are issued in batches and failures are
/// reported with the batch index.
pub fn sample_perturbations(
    image: &GrayImage,
    segmap: &SegmentMap,
    predictor: &dyn Predictor,
    cfg: &LimeConfig,
) -> Result<PerturbationSet> {
    cfg.validate()?;
    let s = segmap.segment_count;
    let class_count = predictor.class_count();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut masks = Vec::with_capacity(cfg.num_samples);
    masks.push(vec![true; s]);
    for _ in 1..cfg.num_samples {
        masks.push((0..s).map(|_| rng.gen::<bool>()).collect());
    }

    let means = segment_means(image, segmap);
    let mut responses = Vec::with_capacity(cfg.num_samples);
    for (batch_idx, mask_batch) in masks.chunks(PREDICT_BATCH).enumerate() {
        let imgs: Vec<GrayImage> = mask_batch
            .iter()
            .map(|m| apply_mask(image, segmap, m, &means, cfg.replacement))
            .collect();
        let rows = predictor
            .predict(&imgs)
            .map_err(|e| Error::PredictionFailed {
                batch: batch_idx,
                message: e.to_string(),
            })?;
        if rows.len() != imgs.len() {
            return Err(Error::PredictionFailed {
                batch: batch_idx,
                message: format!("predictor returned {} rows for {} images", rows.len(), imgs.len()),
            });
        }
        for row in &rows {
            if !is_valid_probability_row(row, class_count) {
                return Err(Error::PredictionFailed {
                    batch: batch_idx,
                    message: "predictor returned an invalid probability row".into(),
                });
            }
        }
        responses.extend(rows);
    }

    let kernel_weights = masks.iter().map(|m| locality_kernel(m, cfg)).collect();
    Ok(PerturbationSet {
        masks,
        responses,
        kernel_weights,
    })
}

/// Weighted ridge fit of the target-class responses on the binary masks.
///
/// Two stages realize the complexity cap: a full fit over all segments keeps
/// the `max_features` largest-magnitude weights, then the kept features are
/// refit. The intercept is fitted but never penalized, so the segment
/// weights keep their meaning as the local linear model. Reports the
/// weighted r-squared of the final fit (1.0 for a zero-variance target).
pub fn fit_local_model(
    pset: &PerturbationSet,
    target_class: usize,
    cfg: &LimeConfig,
) -> Result<Explanation> {
    cfg.validate()?;
    let class_count = pset
        .responses
        .first()
        .map(|r| r.len())
        .ok_or_else(|| Error::invalid("perturbation set is empty"))?;
    if target_class >= class_count {
        return Err(Error::LabelOutOfRange {
            label: target_class,
            class_count,
        });
    }
    let s = pset.masks[0].len();
    let y: Vec<f64> = pset.responses.iter().map(|r| r[target_class]).collect();

    // Stage 1: full fit to rank segments.
    let all: Vec<usize> = (0..s).collect();
    let full = weighted_ridge(&pset.masks, &y, &pset.kernel_weights, &all, cfg.ridge_lambda)?;
    let mut ranked: Vec<usize> = (0..s).collect();
    ranked.sort_by(|&a, &b| {
        full.coefficients[b]
            .abs()
            .partial_cmp(&full.coefficients[a].abs())
            .expect("finite coefficients")
            .then(a.cmp(&b))
    });
    let kept: Vec<usize> = {
        let mut kept = ranked[..s.min(cfg.max_features)].to_vec();
        kept.sort_unstable();
        kept
    };

    // Stage 2: refit on the kept segments only.
    let refit = weighted_ridge(&pset.masks, &y, &pset.kernel_weights, &kept, cfg.ridge_lambda)?;

    let mut feature_weights: Vec<FeatureWeight> = kept
        .iter()
        .enumerate()
        .map(|(i, &seg)| FeatureWeight {
            segment: seg as u32,
            weight: refit.coefficients[i],
        })
        .collect();
    feature_weights.sort_by(|a, b| {
        b.weight
            .abs()
            .partial_cmp(&a.weight.abs())
            .expect("finite weights")
            .then(a.segment.cmp(&b.segment))
    });

    Ok(Explanation {
        target_class,
        intercept: refit.intercept,
        local_fit_r2: refit.r2,
        feature_weights,
        config: cfg.clone(),
        rank_deficient: full.rank_deficient || refit.rank_deficient,
    })
}

struct RidgeFit {
    coefficients: Vec<f64>, // aligned with the `columns` passed in
    intercept: f64,
    r2: f64,
    rank_deficient: bool,
}

/// Solves min_w sum_i pi_i (y_i - w.z_i - b)^2 + lambda ||w||^2 over the
/// selected mask columns, with the intercept unpenalized.
///
/// The weighted design is stacked with sqrt(lambda) ridge rows and solved by
/// SVD, which doubles as the pseudo-inverse fallback when lambda = 0 leaves
/// the system singular.
fn weighted_ridge(
    masks: &[Vec<bool>],
    y: &[f64],
    weights: &[f64],
    columns: &[usize],
    lambda: f64,
) -> Result<RidgeFit> {
    let n = masks.len();
    let p = columns.len();
    let cols = p + 1; // + intercept
    let ridge_rows = if lambda > 0.0 { p } else { 0 };

    let mut design = DMatrix::zeros(n + ridge_rows, cols);
    let mut rhs = DVector::zeros(n + ridge_rows);
    for (i, mask) in masks.iter().enumerate() {
        let sw = weights[i].sqrt();
        for (j, &col) in columns.iter().enumerate() {
            if mask[col] {
                design[(i, j)] = sw;
            }
        }
        design[(i, p)] = sw; // intercept column
        rhs[i] = sw * y[i];
    }
    let sqrt_lambda = lambda.sqrt();
    for j in 0..ridge_rows {
        design[(n + j, j)] = sqrt_lambda;
    }

    let svd = design.svd(true, true);
    let eps = 1e-10;
    let rank = svd.singular_values.iter().filter(|&&v| v > eps).count();
    let rank_deficient = rank < cols;
    let solution = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::invalid(format!("ridge solve failed: {e}")))?;

    let coefficients: Vec<f64> = (0..p).map(|j| solution[j]).collect();
    let intercept = solution[p];

    // Weighted r-squared of the fit on the perturbation rows.
    let total_weight: f64 = weights.iter().sum();
    let y_mean: f64 = y
        .iter()
        .zip(weights)
        .map(|(&yi, &wi)| wi * yi)
        .sum::<f64>()
        / total_weight;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (i, mask) in masks.iter().enumerate() {
        let mut pred = intercept;
        for (j, &col) in columns.iter().enumerate() {
            if mask[col] {
                pred += coefficients[j];
            }
        }
        ss_res += weights[i] * (y[i] - pred).powi(2);
        ss_tot += weights[i] * (y[i] - y_mean).powi(2);
    }
    let r2 = if ss_tot < 1e-18 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };

    Ok(RidgeFit {
        coefficients,
        intercept,
        r2,
        rank_deficient,
    })
}

/// Segments the image, samples perturbations, and fits one explanation per
/// requested class (or for the predictor's top class when `classes` is
/// empty). Returns the segment map alongside the explanations so overlays
/// can be rendered.
pub fn explain_instance(
    image: &GrayImage,
    predictor: &dyn Predictor,
    segmenter: &Segmenter,
    cfg: &LimeConfig,
    classes: &[usize],
) -> Result<(SegmentMap, Vec<Explanation>)> {
    let segmap = segmenter.segment(image)?;
    let pset = sample_perturbations(image, &segmap, predictor, cfg)?;
    let targets: Vec<usize> = if classes.is_empty() {
        let fx = &pset.responses[0]; // row 0 is the unperturbed instance
        let top = fx
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probabilities"))
            .map(|(i, _)| i)
            .expect("non-empty probability row");
        vec![top]
    } else {
        classes.to_vec()
    };
    let explanations = targets
        .iter()
        .map(|&c| fit_local_model(&pset, c, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((segmap, explanations))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlayMode {
    /// Keep pixels of positive-weight segments; everything else mid-gray.
    KeepPositive,
    /// Shift each segment's brightness by an offset proportional to its
    /// signed weight.
    Heat,
}

const OVERLAY_GRAY: u8 = 128;
const HEAT_RANGE: f64 = 64.0;

pub fn render_overlay(
    image: &GrayImage,
    segmap: &SegmentMap,
    explanation: &Explanation,
    mode: OverlayMode,
) -> GrayImage {
    match mode {
        OverlayMode::KeepPositive => {
            let mut keep = vec![false; segmap.segment_count];
            for f in &explanation.feature_weights {
                if f.weight > 0.0 {
                    keep[f.segment as usize] = true;
                }
            }
            let mut out = GrayImage::filled(image.width, image.height, OVERLAY_GRAY);
            for (idx, &label) in segmap.labels.iter().enumerate() {
                if keep[label as usize] {
                    out.pixels[idx] = image.pixels[idx];
                }
            }
            out
        }
        OverlayMode::Heat => {
            let max_abs = explanation
                .feature_weights
                .iter()
                .map(|f| f.weight.abs())
                .fold(0.0, f64::max);
            let mut offset = vec![0.0f64; segmap.segment_count];
            if max_abs > 0.0 {
                for f in &explanation.feature_weights {
                    offset[f.segment as usize] = f.weight / max_abs * HEAT_RANGE;
                }
            }
            let mut out = image.clone();
            for (idx, &label) in segmap.labels.iter().enumerate() {
                let v = image.pixels[idx] as f64 + offset[label as usize];
                out.pixels[idx] = v.round().clamp(0.0, 255.0) as u8;
            }
            out
        }
    }
}

//! Stratified k-fold cross-validation, inverse-frequency balanced sampling,
//! classification metrics, and the fold-wise experiment runner.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::predictors::{
    knn_head, linear_svm_head, softmax_head_with, ClassifierHead, ReferenceNet, TrainConfig,
};
use crate::seeds;

/// Fold assignment per sample, with a per-fold class census.
#[derive(Debug, Clone, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// fold_census[fold][class]
    pub fold_census: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|&(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Stratified fold assignment: within each class, samples are seeded-shuffled
/// and dealt round-robin to folds, so every fold's class count is within one
/// of exact proportionality.
pub fn stratified_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k < 2 {
        return Err(Error::invalid("fold count must be at least 2"));
    }
    let class_count = labels.iter().max().copied().unwrap_or(0) + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &label) in labels.iter().enumerate() {
        by_class[label].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; labels.len()];
    let mut fold_census = vec![vec![0usize; class_count]; k];
    for (class, members) in by_class.iter().enumerate() {
        let mut order = members.clone();
        order.shuffle(&mut rng);
        for (pos, &sample) in order.iter().enumerate() {
            let fold = pos % k;
            assignments[sample] = fold;
            fold_census[fold][class] += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignments,
        fold_census,
    })
}

/// Inverse-frequency weighted sampling with replacement: each sample's weight
/// is 1/count(its class), so every present class is drawn with equal
/// probability. Returns indices into `labels`.
pub fn balanced_sampler(labels: &[usize], draw_count: usize, seed: u64) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class_count = labels.iter().max().copied().unwrap_or(0) + 1;
    let mut counts = vec![0usize; class_count];
    for &l in labels {
        counts[l] += 1;
    }
    let weights: Vec<f64> = labels.iter().map(|&l| 1.0 / counts[l] as f64).collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| Error::invalid(format!("weighted sampler: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..draw_count).map(|_| dist.sample(&mut rng)).collect())
}

/// Per-class precision/recall with explicit zero-division flags.
#[derive(Debug, Clone, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    /// False when the class was never predicted (precision forced to 0).
    pub precision_defined: bool,
    /// False when the class never occurs in the truth (recall forced to 0).
    pub recall_defined: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsFragment {
    /// confusion[actual][predicted] counts.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub total: usize,
}

/// Confusion matrix, accuracy, and per-class precision/recall.
pub fn confusion_and_metrics(
    predicted: &[usize],
    truth: &[usize],
    class_count: usize,
) -> Result<MetricsFragment> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            context: "predicted vs true labels".into(),
            len_a: predicted.len(),
            len_b: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut confusion = vec![vec![0usize; class_count]; class_count];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= class_count || t >= class_count {
            return Err(Error::LabelOutOfRange {
                label: p.max(t),
                class_count,
            });
        }
        confusion[t][p] += 1;
    }
    let total = predicted.len();
    let trace: usize = (0..class_count).map(|c| confusion[c][c]).sum();
    let accuracy = trace as f64 / total as f64;
    let per_class = (0..class_count)
        .map(|c| {
            let tp = confusion[c][c];
            let predicted_c: usize = (0..class_count).map(|t| confusion[t][c]).sum();
            let actual_c: usize = confusion[c].iter().sum();
            let (precision, precision_defined) = if predicted_c == 0 {
                (0.0, false)
            } else {
                (tp as f64 / predicted_c as f64, true)
            };
            let (recall, recall_defined) = if actual_c == 0 {
                (0.0, false)
            } else {
                (tp as f64 / actual_c as f64, true)
            };
            ClassMetrics {
                precision,
                recall,
                precision_defined,
                recall_defined,
            }
        })
        .collect();
    Ok(MetricsFragment {
        confusion,
        accuracy,
        per_class,
        total,
    })
}

/// Head selection for `run_experiment`.
#[derive(Debug, Clone)]
pub enum HeadSpec {
    Knn { k: usize },
    Svm { c_slack: f64, epochs: usize },
    Softmax(TrainConfig),
}

/// Feature extraction for the heads.
pub enum FeatureSource<'a> {
    /// Rectified hidden activations of a reference network.
    Penultimate(&'a ReferenceNet),
    /// Flattened pixels scaled to [0, 1].
    RawPixels,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    /// Dataset indices actually drawn for training, in draw order. Without
    /// balancing this is the training portion itself; with balancing it is
    /// the resampled stream (per-epoch for the softmax head).
    pub train_stream: Vec<usize>,
    pub metrics: MetricsFragment,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AggregateStat {
    pub mean: f64,
    /// Population standard deviation over folds (divide by k).
    pub std: f64,
}

fn aggregate(values: &[f64]) -> AggregateStat {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    AggregateStat {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub k: usize,
    pub class_count: usize,
    pub class_names: Vec<String>,
    pub balanced: bool,
    pub folds: Vec<FoldOutcome>,
    pub accuracy: AggregateStat,
    pub precision: Vec<AggregateStat>,
    pub recall: Vec<AggregateStat>,
}

impl EvalReport {
    /// Text table with "mean±std%" cells to two decimals.
    pub fn render_table(&self) -> String {
        let fmt = |s: &AggregateStat| format!("{:.2}±{:.2}%", s.mean * 100.0, s.std * 100.0);
        let name_w = self
            .class_names
            .iter()
            .map(|n| n.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        out.push_str(&format!("accuracy: {}\n", fmt(&self.accuracy)));
        out.push_str(&format!(
            "{:<name_w$}  {:>16}  {:>16}\n",
            "class", "precision", "recall"
        ));
        for (i, name) in self.class_names.iter().enumerate() {
            out.push_str(&format!(
                "{:<name_w$}  {:>16}  {:>16}\n",
                name,
                fmt(&self.precision[i]),
                fmt(&self.recall[i])
            ));
        }
        out
    }
}

/// Runs the fold-wise experiment: per fold, fit the head on the training
/// portion (balanced resampling of the training portion only, when enabled)
/// and evaluate on the untouched test fold. Test folds are never resampled.
///
/// Balanced resampling draws a stream the same size as the training portion:
/// once for the KNN/SVM heads, and fresh per epoch for the softmax head.
pub fn run_experiment(
    data: &Dataset,
    features: &FeatureSource,
    head: &HeadSpec,
    plan: &FoldPlan,
    balanced: bool,
    seed: u64,
) -> Result<EvalReport> {
    if plan.assignments.len() != data.len() {
        return Err(Error::invalid("fold plan does not match dataset size"));
    }
    let labels = data.labels();
    let class_count = data.class_count();
    let all_features: Vec<Vec<f64>> = match features {
        FeatureSource::Penultimate(net) => {
            let images: Vec<_> = data.images.iter().map(|i| i.image.clone()).collect();
            net.penultimate_features(&images)?
        }
        FeatureSource::RawPixels => data
            .images
            .iter()
            .map(|i| i.image.pixels.iter().map(|&p| p as f64 / 255.0).collect())
            .collect(),
    };

    let mut folds = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let test_idx = plan.test_indices(fold);
        let train_idx = plan.train_indices(fold);
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(Error::invalid(format!("fold {fold} has an empty side")));
        }
        let fold_seed = seeds::derive(seed, fold as u64);
        let pool_features: Vec<Vec<f64>> =
            train_idx.iter().map(|&i| all_features[i].clone()).collect();
        let pool_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();

        let mut train_stream: Vec<usize> = Vec::new();
        let fitted: Box<dyn ClassifierHead> = match head {
            HeadSpec::Knn { k } => {
                let (feats, labs, stream) = fit_pool(
                    &pool_features,
                    &pool_labels,
                    &train_idx,
                    balanced,
                    fold_seed,
                )?;
                train_stream = stream;
                Box::new(knn_head(feats, labs, *k)?)
            }
            HeadSpec::Svm { c_slack, epochs } => {
                let (feats, labs, stream) = fit_pool(
                    &pool_features,
                    &pool_labels,
                    &train_idx,
                    balanced,
                    fold_seed,
                )?;
                train_stream = stream;
                Box::new(linear_svm_head(
                    feats,
                    labs,
                    *c_slack,
                    *epochs,
                    seeds::derive(fold_seed, 1),
                )?)
            }
            HeadSpec::Softmax(cfg) => {
                let mut cfg = cfg.clone();
                cfg.seed = seeds::derive(fold_seed, 2);
                let stream_log = std::cell::RefCell::new(&mut train_stream);
                let n = pool_labels.len();
                let head = if balanced {
                    let pool_labels_ref = &pool_labels;
                    let train_idx_ref = &train_idx;
                    softmax_head_with(&pool_features, &pool_labels, &cfg, |epoch| {
                        let draws =
                            balanced_sampler(pool_labels_ref, n, seeds::derive(fold_seed, 100 + epoch))
                                .expect("non-empty pool");
                        stream_log
                            .borrow_mut()
                            .extend(draws.iter().map(|&p| train_idx_ref[p]));
                        draws
                    })?
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    let train_idx_ref = &train_idx;
                    softmax_head_with(&pool_features, &pool_labels, &cfg, |_| {
                        let mut idx: Vec<usize> = (0..n).collect();
                        idx.shuffle(&mut rng);
                        stream_log
                            .borrow_mut()
                            .extend(idx.iter().map(|&p| train_idx_ref[p]));
                        idx
                    })?
                };
                Box::new(head)
            }
        };

        let test_features: Vec<Vec<f64>> =
            test_idx.iter().map(|&i| all_features[i].clone()).collect();
        let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
        let predicted = fitted.predict(&test_features);
        let metrics = confusion_and_metrics(&predicted, &test_labels, class_count)?;
        folds.push(FoldOutcome {
            fold,
            test_indices: test_idx,
            train_stream,
            metrics,
        });
    }

    let accuracy = aggregate(&folds.iter().map(|f| f.metrics.accuracy).collect::<Vec<_>>());
    let precision = (0..class_count)
        .map(|c| {
            aggregate(
                &folds
                    .iter()
                    .map(|f| f.metrics.per_class[c].precision)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let recall = (0..class_count)
        .map(|c| {
            aggregate(
                &folds
                    .iter()
                    .map(|f| f.metrics.per_class[c].recall)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    Ok(EvalReport {
        k: plan.k,
        class_count,
        class_names: data.class_names.clone(),
        balanced,
        folds,
        accuracy,
        precision,
        recall,
    })
}

/// Builds the training set for the single-fit heads: the pool itself, or one
/// balanced resample of it. Returns (features, labels, dataset-index stream).
fn fit_pool(
    pool_features: &[Vec<f64>],
    pool_labels: &[usize],
    train_idx: &[usize],
    balanced: bool,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>, Vec<usize>)> {
    if balanced {
        let draws = balanced_sampler(pool_labels, pool_labels.len(), seed)?;
        let feats = draws.iter().map(|&p| pool_features[p].clone()).collect();
        let labs = draws.iter().map(|&p| pool_labels[p]).collect();
        let stream = draws.iter().map(|&p| train_idx[p]).collect();
        Ok((feats, labs, stream))
    } else {
        Ok((
            pool_features.to_vec(),
            pool_labels.to_vec(),
            train_idx.to_vec(),
        ))
    }
}

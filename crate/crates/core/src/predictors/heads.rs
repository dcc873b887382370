//! Classifier heads fitted on penultimate features: K-nearest neighbors,
//! one-vs-rest linear SVM, and a softmax (single linear layer) head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::net::{cross_entropy, softmax, TrainConfig};
use crate::error::{Error, Result};

/// Common prediction surface for the three heads.
pub trait ClassifierHead {
    fn class_count(&self) -> usize;
    fn predict(&self, features: &[Vec<f64>]) -> Vec<usize>;
    fn predict_proba(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>>;
}

// ---------------------------------------------------------------------------
// KNN

#[derive(Debug, Clone)]
pub struct KnnHead {
    k: usize,
    class_count: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

/// Builds a K-nearest-neighbor head over the Euclidean metric.
pub fn knn_head(features: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Result<KnnHead> {
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(Error::invalid("features/labels length mismatch"));
    }
    if k == 0 || k > features.len() {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..={}",
            features.len()
        )));
    }
    let class_count = labels.iter().max().copied().unwrap_or(0) + 1;
    Ok(KnnHead {
        k,
        class_count,
        features,
        labels,
    })
}

impl KnnHead {
    /// Majority vote over the K nearest training points. The probability row
    /// is the vote fractions. Vote ties break by summed inverse distance,
    /// then by smallest class index.
    pub fn classify(&self, query: &[f64]) -> (usize, Vec<f64>) {
        let mut dists: Vec<(f64, usize)> = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (euclidean(query, f), i))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let neighbors = &dists[..self.k];

        let mut votes = vec![0usize; self.class_count];
        let mut inv_dist = vec![0.0f64; self.class_count];
        for &(d, i) in neighbors {
            let class = self.labels[i];
            votes[class] += 1;
            inv_dist[class] += if d == 0.0 { f64::INFINITY } else { 1.0 / d };
        }
        let max_votes = votes.iter().max().copied().unwrap_or(0);
        let mut winner = None;
        for c in 0..self.class_count {
            if votes[c] != max_votes {
                continue;
            }
            winner = match winner {
                None => Some(c),
                Some(best) if inv_dist[c] > inv_dist[best] => Some(c),
                other => other,
            };
        }
        let label = winner.unwrap_or(0);
        let probs = votes
            .iter()
            .map(|&v| v as f64 / self.k as f64)
            .collect();
        (label, probs)
    }
}

impl ClassifierHead for KnnHead {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, features: &[Vec<f64>]) -> Vec<usize> {
        features.iter().map(|f| self.classify(f).0).collect()
    }

    fn predict_proba(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features.iter().map(|f| self.classify(f).1).collect()
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------------
// Linear SVM

#[derive(Debug, Clone)]
pub struct SvmHead {
    class_count: usize,
    weights: Vec<Vec<f64>>, // one weight vector per class (one-vs-rest)
    biases: Vec<f64>,
    /// Mean regularized hinge objective after each epoch.
    pub objective_log: Vec<f64>,
    /// Set when training data held a single class; that class is always
    /// predicted.
    pub degenerate_class: Option<usize>,
    pub warnings: Vec<String>,
}

/// Trains one-vs-rest L2-regularized hinge classifiers by seeded stochastic
/// subgradient descent with step 1/(lambda*t), lambda = 1/(n*C).
///
/// The probability row is a softmax over margins, for reporting symmetry with
/// the other heads only; it is not calibrated.
pub fn linear_svm_head(
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    c_slack: f64,
    epochs: usize,
    seed: u64,
) -> Result<SvmHead> {
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(Error::invalid("features/labels length mismatch"));
    }
    if c_slack <= 0.0 || epochs == 0 {
        return Err(Error::invalid("slack C and epochs must be positive"));
    }
    let n = features.len();
    let dim = features[0].len();
    let class_count = labels.iter().max().copied().unwrap_or(0) + 1;
    let distinct = {
        let mut seen = vec![false; class_count];
        labels.iter().for_each(|&l| seen[l] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        let class = labels[0];
        return Ok(SvmHead {
            class_count,
            weights: vec![vec![0.0; dim]; class_count],
            biases: (0..class_count)
                .map(|c| if c == class { 1.0 } else { 0.0 })
                .collect(),
            objective_log: Vec::new(),
            degenerate_class: Some(class),
            warnings: vec![format!(
                "training data holds a single class ({class}); classifier is degenerate"
            )],
        });
    }

    let lambda = 1.0 / (n as f64 * c_slack);
    // The bias rides along as an augmented constant-one feature so it shares
    // the 1/(lambda t) step schedule and stays bounded.
    let mut weights = vec![vec![0.0; dim + 1]; class_count];
    let mut t = 1u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objective_log = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let eta = 1.0 / (lambda * t as f64);
            let x = &features[i];
            for c in 0..class_count {
                let y = if labels[i] == c { 1.0 } else { -1.0 };
                let margin = y * (dot(&weights[c][..dim], x) + weights[c][dim]);
                let shrink = 1.0 - eta * lambda;
                for w in weights[c].iter_mut() {
                    *w *= shrink;
                }
                if margin < 1.0 {
                    for (w, &xi) in weights[c][..dim].iter_mut().zip(x) {
                        *w += eta * y * xi;
                    }
                    weights[c][dim] += eta * y;
                }
            }
            t += 1;
        }
        objective_log.push(svm_objective(&weights, &features, &labels, lambda, class_count));
    }
    let biases = weights.iter().map(|w| w[dim]).collect();
    let weights = weights
        .into_iter()
        .map(|mut w| {
            w.truncate(dim);
            w
        })
        .collect();
    Ok(SvmHead {
        class_count,
        weights,
        biases,
        objective_log,
        degenerate_class: None,
        warnings: Vec::new(),
    })
}

/// Mean over classes of 0.5*lambda*||w||^2 + mean hinge, on the augmented
/// weight vectors (bias included as the last coordinate).
fn svm_objective(
    weights: &[Vec<f64>],
    features: &[Vec<f64>],
    labels: &[usize],
    lambda: f64,
    class_count: usize,
) -> f64 {
    let n = features.len() as f64;
    let dim = features[0].len();
    let mut total = 0.0;
    for c in 0..class_count {
        let reg = 0.5 * lambda * dot(&weights[c], &weights[c]);
        let mut hinge = 0.0;
        for (x, &label) in features.iter().zip(labels) {
            let y = if label == c { 1.0 } else { -1.0 };
            hinge += (1.0 - y * (dot(&weights[c][..dim], x) + weights[c][dim])).max(0.0);
        }
        total += reg + hinge / n;
    }
    total / class_count as f64
}

impl SvmHead {
    pub fn margins(&self, x: &[f64]) -> Vec<f64> {
        (0..self.class_count)
            .map(|c| dot(&self.weights[c], x) + self.biases[c])
            .collect()
    }
}

impl ClassifierHead for SvmHead {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, features: &[Vec<f64>]) -> Vec<usize> {
        features
            .iter()
            .map(|x| {
                let m = self.margins(x);
                argmax(&m)
            })
            .collect()
    }

    fn predict_proba(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features.iter().map(|x| softmax(&self.margins(x))).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Softmax head

#[derive(Debug, Clone)]
pub struct SoftmaxHead {
    class_count: usize,
    dim: usize,
    weight: Vec<f64>, // class x dim, row-major
    bias: Vec<f64>,
    pub loss_log: Vec<f64>,
}

/// Trains a single linear layer with Adam and cross-entropy; a softmax turns
/// its outputs into probabilities. Mirrors the reference-net hyperparameters
/// except for the epoch count (use `TrainConfig { epochs: 30, .. }`).
pub fn softmax_head(
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<SoftmaxHead> {
    let n = features.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    softmax_head_with(features, labels, cfg, move |_| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx
    })
}

/// Softmax-head training with a caller-supplied per-epoch index stream.
pub fn softmax_head_with(
    features: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
    mut epoch_indices: impl FnMut(u64) -> Vec<usize>,
) -> Result<SoftmaxHead> {
    cfg.validate()?;
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(Error::invalid("features/labels length mismatch"));
    }
    let dim = features[0].len();
    let class_count = labels.iter().max().copied().unwrap_or(0) + 1;

    let mut head = SoftmaxHead {
        class_count,
        dim,
        weight: vec![0.0; class_count * dim],
        bias: vec![0.0; class_count],
        loss_log: Vec::with_capacity(cfg.epochs),
    };
    let mut w_state = AdamState::new(head.weight.len());
    let mut b_state = AdamState::new(head.bias.len());

    for epoch in 0..cfg.epochs {
        let indices = epoch_indices(epoch as u64);
        if indices.is_empty() {
            return Err(Error::invalid("epoch index stream is empty"));
        }
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for batch in indices.chunks(cfg.batch_size) {
            let (loss, gw, gb) = head.loss_and_gradients(features, labels, batch)?;
            loss_sum += loss * batch.len() as f64;
            count += batch.len();
            adam_step(&mut head.weight, &gw, &mut w_state, cfg);
            adam_step(&mut head.bias, &gb, &mut b_state, cfg);
        }
        head.loss_log.push(loss_sum / count as f64);
    }
    Ok(head)
}

impl SoftmaxHead {
    fn logits(&self, x: &[f64]) -> Vec<f64> {
        (0..self.class_count)
            .map(|c| dot(&self.weight[c * self.dim..(c + 1) * self.dim], x) + self.bias[c])
            .collect()
    }

    /// Mean loss and gradients over the batch given by `batch` indices.
    pub fn loss_and_gradients(
        &self,
        features: &[Vec<f64>],
        labels: &[usize],
        batch: &[usize],
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut gw = vec![0.0; self.weight.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let mut loss_sum = 0.0;
        for &i in batch {
            let x = &features[i];
            if labels[i] >= self.class_count {
                return Err(Error::LabelOutOfRange {
                    label: labels[i],
                    class_count: self.class_count,
                });
            }
            let probs = softmax(&self.logits(x));
            let (loss, dz) = cross_entropy(&probs, labels[i])?;
            loss_sum += loss;
            for c in 0..self.class_count {
                for (j, &xj) in x.iter().enumerate() {
                    gw[c * self.dim + j] += dz[c] * xj;
                }
                gb[c] += dz[c];
            }
        }
        let n = batch.len() as f64;
        gw.iter_mut().for_each(|g| *g /= n);
        gb.iter_mut().for_each(|g| *g /= n);
        Ok((loss_sum / n, gw, gb))
    }

    pub fn param(&self, group: &str, index: usize) -> f64 {
        match group {
            "weight" => self.weight[index],
            "bias" => self.bias[index],
            other => panic!("unknown group '{other}'"),
        }
    }

    pub fn set_param(&mut self, group: &str, index: usize, value: f64) {
        match group {
            "weight" => self.weight[index] = value,
            "bias" => self.bias[index] = value,
            other => panic!("unknown group '{other}'"),
        }
    }

    pub fn param_group_len(&self, group: &str) -> usize {
        match group {
            "weight" => self.weight.len(),
            "bias" => self.bias.len(),
            other => panic!("unknown group '{other}'"),
        }
    }

    pub fn loss_on(&self, features: &[Vec<f64>], labels: &[usize], batch: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for &i in batch {
            let probs = softmax(&self.logits(&features[i]));
            let (loss, _) = cross_entropy(&probs, labels[i])?;
            total += loss;
        }
        Ok(total / batch.len() as f64)
    }
}

impl ClassifierHead for SoftmaxHead {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, features: &[Vec<f64>]) -> Vec<usize> {
        features.iter().map(|x| argmax(&self.logits(x))).collect()
    }

    fn predict_proba(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features.iter().map(|x| softmax(&self.logits(x))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for label in 0..2usize {
            let center = if label == 0 { [-2.0, -2.0] } else { [2.0, 2.0] };
            for _ in 0..per_class {
                features.push(vec![
                    center[0] + rng.gen_range(-0.8..0.8),
                    center[1] + rng.gen_range(-0.8..0.8),
                ]);
                labels.push(label);
            }
        }
        (features, labels)
    }

    #[test]
    fn knn_exact_match_wins_at_k1() {
        let features = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![0, 0, 1];
        let head = knn_head(features, labels, 1).unwrap();
        let (label, _) = head.classify(&[0.0, 1.0]);
        assert_eq!(label, 1);
    }

    #[test]
    fn knn_hand_vote_fractions() {
        // Train {(0,0):A, (1,0):A, (0,1):B}, query (0.1, 0), K=3.
        let features = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let labels = vec![0, 0, 1];
        let head = knn_head(features, labels, 3).unwrap();
        let (label, probs) = head.classify(&[0.1, 0.0]);
        assert_eq!(label, 0);
        assert!((probs[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((probs[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn knn_k_equal_to_n_is_global_majority() {
        let features = vec![vec![0.0], vec![10.0], vec![20.0], vec![30.0], vec![40.0]];
        let labels = vec![1, 1, 1, 0, 0];
        let head = knn_head(features, labels, 5).unwrap();
        let (label, _) = head.classify(&[100.0]);
        assert_eq!(label, 1);
    }

    #[test]
    fn knn_rejects_k_larger_than_n() {
        assert!(knn_head(vec![vec![0.0]], vec![0], 2).is_err());
    }

    #[test]
    fn svm_separates_blobs() {
        let (features, labels) = blobs(20, 1);
        let head = linear_svm_head(features.clone(), labels.clone(), 1.0, 40, 7).unwrap();
        let pred = head.predict(&features);
        assert_eq!(pred, labels, "training accuracy below 1.0");
    }

    #[test]
    fn svm_objective_decreases() {
        let (features, labels) = blobs(20, 2);
        let head = linear_svm_head(features, labels, 1.0, 30, 3).unwrap();
        let first = head.objective_log[0];
        let last = *head.objective_log.last().unwrap();
        assert!(last < first, "objective {first} -> {last}");
    }

    #[test]
    fn svm_single_class_is_degenerate_with_warning() {
        let features = vec![vec![1.0], vec![2.0]];
        let labels = vec![1, 1];
        let head = linear_svm_head(features, labels, 1.0, 5, 0).unwrap();
        assert_eq!(head.degenerate_class, Some(1));
        assert!(!head.warnings.is_empty());
        assert_eq!(head.predict(&[vec![-100.0], vec![7.0]]), vec![1, 1]);
    }

    #[test]
    fn softmax_head_separates_blobs() {
        let (features, labels) = blobs(20, 5);
        let cfg = TrainConfig {
            epochs: 30,
            learning_rate: 5e-2,
            seed: 1,
            ..TrainConfig::default()
        };
        let head = softmax_head(&features, &labels, &cfg).unwrap();
        let pred = head.predict(&features);
        let acc = pred
            .iter()
            .zip(&labels)
            .filter(|(a, b)| a == b)
            .count() as f64
            / labels.len() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
    }

    #[test]
    fn softmax_head_gradients_match_finite_differences() {
        let (features, labels) = blobs(4, 9);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let head = softmax_head(&features, &labels, &cfg).unwrap();
        let batch: Vec<usize> = (0..features.len()).collect();
        let (_, gw, gb) = head.loss_and_gradients(&features, &labels, &batch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-5;
        for (group, grads) in [("weight", &gw), ("bias", &gb)] {
            for _ in 0..8 {
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
                    "{group}[{idx}]: fd={fd} analytic={}",
                    grads[idx]
                );
            }
        }
    }

    #[test]
    fn all_heads_emit_valid_probability_rows() {
        let (features, labels) = blobs(10, 11);
        let cfg = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let heads: Vec<Box<dyn ClassifierHead>> = vec![
            Box::new(knn_head(features.clone(), labels.clone(), 3).unwrap()),
            Box::new(linear_svm_head(features.clone(), labels.clone(), 1.0, 5, 0).unwrap()),
            Box::new(softmax_head(&features, &labels, &cfg).unwrap()),
        ];
        for head in &heads {
            for row in head.predict_proba(&features) {
                assert!(
                    super::super::is_valid_probability_row(&row, head.class_count()),
                    "bad row {row:?}"
                );
            }
        }
    }

    #[test]
    fn heads_are_deterministic_under_seed() {
        let (features, labels) = blobs(8, 13);
        let a = linear_svm_head(features.clone(), labels.clone(), 1.0, 10, 5).unwrap();
        let b = linear_svm_head(features.clone(), labels.clone(), 1.0, 10, 5).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.biases, b.biases);

        let cfg = TrainConfig {
            epochs: 5,
            seed: 2,
            ..TrainConfig::default()
        };
        let ha = softmax_head(&features, &labels, &cfg).unwrap();
        let hb = softmax_head(&features, &labels, &cfg).unwrap();
        assert_eq!(ha.weight, hb.weight);
        assert_eq!(ha.bias, hb.bias);
    }
}

//! One-hidden-layer rectifier network trained with Adam and cross-entropy.
//!
//! Parameters are held as f64 for gradient math but kept exactly
//! f32-representable at all times (initialization and every Adam update round
//! through f32), so NTF checkpoints round-trip without changing a single
//! prediction.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::{Concurrency, Predictor};
use crate::data::{GrayImage, LabeledImage};
use crate::error::{Error, Result};
use crate::tensors::{Checkpoint, NamedTensor, TensorKind};

pub const DEFAULT_HIDDEN_DIM: usize = 64;

/// Training hyperparameters shared by the reference net and the softmax head.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Layer ids receiving zero updates ("fc1", "fc2").
    pub freeze: BTreeSet<String>,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 6,
            epochs: 100,
            freeze: BTreeSet::new(),
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("training hyperparameters must be positive"));
        }
        Ok(())
    }
}

/// Cross-entropy of a probability row against a target class, plus the
/// gradient with respect to the logits that produced the row
/// (softmax(logits) - one_hot(target)).
pub fn cross_entropy(probabilities: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= probabilities.len() {
        return Err(Error::LabelOutOfRange {
            label: target,
            class_count: probabilities.len(),
        });
    }
    let p = probabilities[target].max(1e-12);
    let loss = -p.ln();
    let grad = probabilities
        .iter()
        .enumerate()
        .map(|(i, &pi)| if i == target { pi - 1.0 } else { pi })
        .collect();
    Ok((loss, grad))
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NetGradients {
    pub fc1_weight: Vec<f64>,
    pub fc1_bias: Vec<f64>,
    pub fc2_weight: Vec<f64>,
    pub fc2_bias: Vec<f64>,
}

/// Two fully connected layers with a rectifier in between. The hidden
/// activations are the "penultimate features" consumed by the classifier
/// heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceNet {
    input_dim: usize,
    hidden_dim: usize,
    class_count: usize,
    fc1_weight: Vec<f64>, // hidden x input, row-major
    fc1_bias: Vec<f64>,
    fc2_weight: Vec<f64>, // class x hidden, row-major
    fc2_bias: Vec<f64>,
}

impl ReferenceNet {
    /// Seeded uniform initialization in +-1/sqrt(fan_in).
    pub fn new(input_dim: usize, hidden_dim: usize, class_count: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || class_count == 0 {
            return Err(Error::invalid("network dimensions must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |len: usize, fan_in: usize| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..len)
                .map(|_| (rng.gen_range(-bound..bound) as f32) as f64)
                .collect()
        };
        Ok(ReferenceNet {
            input_dim,
            hidden_dim,
            class_count,
            fc1_weight: init(hidden_dim * input_dim, input_dim),
            fc1_bias: init(hidden_dim, input_dim),
            fc2_weight: init(class_count * hidden_dim, hidden_dim),
            fc2_bias: init(class_count, hidden_dim),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Flattens pixels to the network input scale (gray / 255).
    pub fn image_to_input(&self, image: &GrayImage) -> Result<Vec<f64>> {
        if image.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "image has {} pixels, network expects {}",
                image.len(),
                self.input_dim
            )));
        }
        Ok(image.pixels.iter().map(|&p| p as f64 / 255.0).collect())
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden_dim];
        for j in 0..self.hidden_dim {
            let row = &self.fc1_weight[j * self.input_dim..(j + 1) * self.input_dim];
            let mut acc = self.fc1_bias[j];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            h[j] = acc.max(0.0);
        }
        h
    }

    fn logits_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.class_count];
        for c in 0..self.class_count {
            let row = &self.fc2_weight[c * self.hidden_dim..(c + 1) * self.hidden_dim];
            let mut acc = self.fc2_bias[c];
            for (wi, hi) in row.iter().zip(h) {
                acc += wi * hi;
            }
            z[c] = acc;
        }
        z
    }

    pub fn probabilities(&self, image: &GrayImage) -> Result<Vec<f64>> {
        let x = self.image_to_input(image)?;
        let h = self.hidden(&x);
        Ok(softmax(&self.logits_from_hidden(&h)))
    }

    /// Rectified hidden activations for a batch.
    pub fn penultimate_features(&self, images: &[GrayImage]) -> Result<Vec<Vec<f64>>> {
        images
            .iter()
            .map(|img| Ok(self.hidden(&self.image_to_input(img)?)))
            .collect()
    }

    /// Mean cross-entropy over a batch.
    pub fn loss_on(&self, images: &[GrayImage], labels: &[usize]) -> Result<f64> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::invalid("batch images/labels mismatch"));
        }
        let mut total = 0.0;
        for (img, &label) in images.iter().zip(labels) {
            let probs = self.probabilities(img)?;
            let (loss, _) = cross_entropy(&probs, label)?;
            total += loss;
        }
        Ok(total / images.len() as f64)
    }

    /// Mean loss and mean parameter gradients over a batch.
    pub fn loss_and_gradients(
        &self,
        images: &[GrayImage],
        labels: &[usize],
    ) -> Result<(f64, NetGradients)> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::invalid("batch images/labels mismatch"));
        }
        let mut grads = NetGradients {
            fc1_weight: vec![0.0; self.fc1_weight.len()],
            fc1_bias: vec![0.0; self.fc1_bias.len()],
            fc2_weight: vec![0.0; self.fc2_weight.len()],
            fc2_bias: vec![0.0; self.fc2_bias.len()],
        };
        let mut total_loss = 0.0;
        for (img, &label) in images.iter().zip(labels) {
            if label >= self.class_count {
                return Err(Error::LabelOutOfRange {
                    label,
                    class_count: self.class_count,
                });
            }
            let x = self.image_to_input(img)?;
            // Forward, keeping pre-activations for the rectifier gradient.
            let mut pre = vec![0.0; self.hidden_dim];
            for j in 0..self.hidden_dim {
                let row = &self.fc1_weight[j * self.input_dim..(j + 1) * self.input_dim];
                let mut acc = self.fc1_bias[j];
                for (wi, xi) in row.iter().zip(&x) {
                    acc += wi * xi;
                }
                pre[j] = acc;
            }
            let h: Vec<f64> = pre.iter().map(|&a| a.max(0.0)).collect();
            let probs = softmax(&self.logits_from_hidden(&h));
            let (loss, dz) = cross_entropy(&probs, label)?;
            total_loss += loss;

            for c in 0..self.class_count {
                for j in 0..self.hidden_dim {
                    grads.fc2_weight[c * self.hidden_dim + j] += dz[c] * h[j];
                }
                grads.fc2_bias[c] += dz[c];
            }
            for j in 0..self.hidden_dim {
                if pre[j] <= 0.0 {
                    continue;
                }
                let mut dh = 0.0;
                for c in 0..self.class_count {
                    dh += self.fc2_weight[c * self.hidden_dim + j] * dz[c];
                }
                for i in 0..self.input_dim {
                    grads.fc1_weight[j * self.input_dim + i] += dh * x[i];
                }
                grads.fc1_bias[j] += dh;
            }
        }
        let n = images.len() as f64;
        for g in [
            &mut grads.fc1_weight,
            &mut grads.fc1_bias,
            &mut grads.fc2_weight,
            &mut grads.fc2_bias,
        ] {
            for v in g.iter_mut() {
                *v /= n;
            }
        }
        Ok((total_loss / n, grads))
    }

    /// Reads one parameter by group name and flat index (for gradient checks).
    pub fn param(&self, group: &str, index: usize) -> f64 {
        self.group(group)[index]
    }

    /// Overwrites one parameter by group name and flat index.
    pub fn set_param(&mut self, group: &str, index: usize, value: f64) {
        self.group_mut(group)[index] = value;
    }

    pub fn param_group_len(&self, group: &str) -> usize {
        self.group(group).len()
    }

    fn group(&self, name: &str) -> &Vec<f64> {
        match name {
            "fc1.weight" => &self.fc1_weight,
            "fc1.bias" => &self.fc1_bias,
            "fc2.weight" => &self.fc2_weight,
            "fc2.bias" => &self.fc2_bias,
            other => panic!("unknown parameter group '{other}'"),
        }
    }

    fn group_mut(&mut self, name: &str) -> &mut Vec<f64> {
        match name {
            "fc1.weight" => &mut self.fc1_weight,
            "fc1.bias" => &mut self.fc1_bias,
            "fc2.weight" => &mut self.fc2_weight,
            "fc2.bias" => &mut self.fc2_bias,
            other => panic!("unknown parameter group '{other}'"),
        }
    }

    /// Serializes all parameters as an NTF checkpoint.
    pub fn export_checkpoint(&self) -> Checkpoint {
        let to_f32 = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let tensors = vec![
            NamedTensor::new(
                "fc1.weight",
                TensorKind::Weight,
                vec![self.hidden_dim, self.input_dim],
                to_f32(&self.fc1_weight),
            )
            .expect("valid by construction"),
            NamedTensor::new(
                "fc1.bias",
                TensorKind::Bias,
                vec![self.hidden_dim],
                to_f32(&self.fc1_bias),
            )
            .expect("valid by construction"),
            NamedTensor::new(
                "fc2.weight",
                TensorKind::Weight,
                vec![self.class_count, self.hidden_dim],
                to_f32(&self.fc2_weight),
            )
            .expect("valid by construction"),
            NamedTensor::new(
                "fc2.bias",
                TensorKind::Bias,
                vec![self.class_count],
                to_f32(&self.fc2_bias),
            )
            .expect("valid by construction"),
        ];
        let mut metadata = BTreeMap::new();
        metadata.insert("model_id".into(), "reference-net".into());
        metadata.insert("created_by".into(), "tunescope".into());
        Checkpoint::new(tensors, metadata).expect("valid by construction")
    }

    /// Rebuilds a network from a checkpoint written by `export_checkpoint`.
    pub fn import_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let tensor = |name: &str| {
            ckpt.get(name).ok_or_else(|| Error::MissingTensor {
                name: name.to_string(),
            })
        };
        let fc1_w = tensor("fc1.weight")?;
        let fc1_b = tensor("fc1.bias")?;
        let fc2_w = tensor("fc2.weight")?;
        let fc2_b = tensor("fc2.bias")?;
        if fc1_w.shape.len() != 2 || fc2_w.shape.len() != 2 {
            return Err(Error::TensorShape {
                tensor: "fc1.weight/fc2.weight".into(),
                message: "expected rank-2 weight tensors".into(),
            });
        }
        let (hidden_dim, input_dim) = (fc1_w.shape[0], fc1_w.shape[1]);
        let (class_count, hidden2) = (fc2_w.shape[0], fc2_w.shape[1]);
        if hidden2 != hidden_dim {
            return Err(Error::TensorShape {
                tensor: "fc2.weight".into(),
                message: format!("hidden dim {hidden2} does not match fc1 ({hidden_dim})"),
            });
        }
        if fc1_b.shape != vec![hidden_dim] || fc2_b.shape != vec![class_count] {
            return Err(Error::TensorShape {
                tensor: "fc1.bias/fc2.bias".into(),
                message: "bias shapes do not match weight shapes".into(),
            });
        }
        let to_f64 = |t: &NamedTensor| t.values.iter().map(|&v| v as f64).collect::<Vec<f64>>();
        Ok(ReferenceNet {
            input_dim,
            hidden_dim,
            class_count,
            fc1_weight: to_f64(fc1_w),
            fc1_bias: to_f64(fc1_b),
            fc2_weight: to_f64(fc2_w),
            fc2_bias: to_f64(fc2_b),
        })
    }
}

impl Predictor for ReferenceNet {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::ConcurrentOk
    }

    fn predict(&self, images: &[GrayImage]) -> Result<Vec<Vec<f64>>> {
        images.iter().map(|img| self.probabilities(img)).collect()
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

const PARAM_GROUPS: [&str; 4] = ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"];

/// Trains with mini-batch Adam; each epoch visits a seeded shuffle of the
/// dataset. Layers listed in `cfg.freeze` stay bit-identical.
pub fn train_reference(
    net: &mut ReferenceNet,
    data: &[LabeledImage],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = data.len();
    train_reference_with(net, data, cfg, move |_epoch| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx
    })
}

/// Training loop with a caller-supplied per-epoch index stream (used for
/// balanced resampling). Indices may repeat; each epoch's stream is cut into
/// `batch_size` mini-batches in order.
pub fn train_reference_with(
    net: &mut ReferenceNet,
    data: &[LabeledImage],
    cfg: &TrainConfig,
    mut epoch_indices: impl FnMut(u64) -> Vec<usize>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for id in &cfg.freeze {
        if id != "fc1" && id != "fc2" {
            return Err(Error::invalid(format!("unknown freeze layer '{id}'")));
        }
    }
    for img in data {
        if img.label >= net.class_count {
            return Err(Error::LabelOutOfRange {
                label: img.label,
                class_count: net.class_count,
            });
        }
    }

    let mut states: BTreeMap<&str, AdamState> = PARAM_GROUPS
        .iter()
        .map(|&g| (g, AdamState::new(net.param_group_len(g))))
        .collect();

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let indices = epoch_indices(epoch as u64);
        if indices.is_empty() {
            return Err(Error::invalid("epoch index stream is empty"));
        }
        let mut loss_sum = 0.0;
        let mut count = 0usize;
        for batch in indices.chunks(cfg.batch_size) {
            let images: Vec<GrayImage> = batch.iter().map(|&i| data[i].image.clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data[i].label).collect();
            let (loss, grads) = net.loss_and_gradients(&images, &labels)?;
            loss_sum += loss * batch.len() as f64;
            count += batch.len();
            for group in PARAM_GROUPS {
                let layer = crate::tensors::layer_of(group);
                if cfg.freeze.contains(layer) {
                    continue;
                }
                let grad = match group {
                    "fc1.weight" => &grads.fc1_weight,
                    "fc1.bias" => &grads.fc1_bias,
                    "fc2.weight" => &grads.fc2_weight,
                    _ => &grads.fc2_bias,
                };
                let state = states.get_mut(group).expect("state per group");
                adam_step(net.group_mut(group), grad, state, cfg);
            }
        }
        epoch_loss.push(loss_sum / count as f64);
    }
    Ok(TrainLog { epoch_loss })
}

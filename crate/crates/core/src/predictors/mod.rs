//! The black-box predictor contract, a trainable reference network, and the
//! three classifier heads (KNN, linear SVM, softmax).

mod adam;
mod heads;
mod net;

pub use adam::{adam_step, AdamState};
pub use heads::{
    knn_head, linear_svm_head, softmax_head, softmax_head_with, ClassifierHead, KnnHead,
    SoftmaxHead, SvmHead,
};
pub use net::{
    cross_entropy, train_reference, train_reference_with, ReferenceNet, TrainConfig, TrainLog,
    DEFAULT_HIDDEN_DIM,
};

use crate::data::GrayImage;
use crate::error::Result;

/// Whether a predictor tolerates overlapping predict calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    ConcurrentOk,
    SerialOnly,
}

/// A black-box classifier: batches of grayscale images in, rows of class
/// probabilities out. Each row must be non-negative and sum to one within
/// 1e-6.
pub trait Predictor {
    fn class_count(&self) -> usize;

    fn concurrency(&self) -> Concurrency {
        Concurrency::SerialOnly
    }

    fn predict(&self, images: &[GrayImage]) -> Result<Vec<Vec<f64>>>;
}

/// Checks the probability-row contract.
pub fn is_valid_probability_row(row: &[f64], class_count: usize) -> bool {
    row.len() == class_count
        && row.iter().all(|&p| p.is_finite() && p >= 0.0)
        && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-6
}

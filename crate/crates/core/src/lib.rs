//! Diagnostics for fine-tuned grayscale image classifiers.
//!
//! The toolkit answers three questions about a model before and after
//! fine-tuning:
//!
//! - *What does one prediction depend on?* The [`explainer`] module fits a
//!   locally weighted sparse linear surrogate over superpixel perturbations
//!   and renders the result as image overlays.
//! - *How far did the weights move?* The [`divergence`] module estimates
//!   per-layer weight densities by histogram and reports KL divergence and
//!   Euclidean distance between two checkpoints, layer by layer.
//! - *How good are the features, and does class balance matter?* The
//!   [`evaluation`] module runs stratified cross-validation with optional
//!   inverse-frequency resampling over three classifier heads.
//!
//! Checkpoints travel in the NTF format ([`tensors`]), images as binary PGM
//! ([`data`]), and a small trainable reference network ([`predictors`])
//! stands in for a full-size CNN so every pipeline runs in seconds.

pub mod data;
pub mod divergence;
pub mod error;
pub mod evaluation;
pub mod explainer;
pub mod predictors;
pub mod seeds;
pub mod segmentation;
pub mod tensors;

pub use error::{Error, Result};

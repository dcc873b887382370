//! Histogram PDF estimation, KL divergence, and per-layer weight drift
//! between two checkpoints.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensors::{pair_layers, Checkpoint, LayerPair};

pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_EPSILON: f64 = 1e-10;

/// Binned density estimate over shared edges. Mass sums to one and every
/// entry is strictly positive after smoothing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityHistogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
}

impl ProbabilityHistogram {
    pub fn validate(&self) -> Result<()> {
        if self.edges.len() != self.mass.len() + 1 {
            return Err(Error::invalid("edges must have one more entry than mass"));
        }
        if self.edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("edges must be strictly increasing"));
        }
        let total: f64 = self.mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mass sums to {total}, not 1")));
        }
        if self.mass.iter().any(|&m| m <= 0.0) {
            return Err(Error::invalid("mass entries must be positive (smoothed)"));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.mass.len()
    }
}

/// Per-layer divergence record: KL in nats, Euclidean distance, and the two
/// population sizes.
#[derive(Debug, Clone, Serialize)]
pub struct LayerDivergence {
    pub layer: String,
    pub kl: f64,
    pub ed: f64,
    pub sample_counts: (usize, usize),
}

/// Divergence table over all paired layers, in checkpoint layer order.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    /// Direction of every KL entry: first checkpoint against second.
    pub direction: &'static str,
    /// Which tensor kinds entered each layer's histogram population.
    pub population: &'static str,
    pub bins: usize,
    pub epsilon: f64,
    pub layers: Vec<LayerDivergence>,
    pub max_kl_layer: String,
    pub max_ed_layer: String,
}

/// Estimates two histograms over shared uniform edges spanning the union of
/// both populations.
///
/// Bins are left-closed/right-open except the last, which is closed. Each
/// bin receives additive smoothing `epsilon` before normalization. If every
/// value of both arrays is equal, the shared range is degenerate and both
/// histograms collapse to unit mass in a single bin (so their KL is zero).
pub fn estimate_histogram_pair(
    values_a: &[f64],
    values_b: &[f64],
    bins: usize,
    epsilon: f64,
) -> Result<(ProbabilityHistogram, ProbabilityHistogram)> {
    if values_a.is_empty() || values_b.is_empty() {
        return Err(Error::invalid("histogram population is empty"));
    }
    if bins == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    if epsilon <= 0.0 {
        return Err(Error::invalid("smoothing epsilon must be positive"));
    }
    for &v in values_a.iter().chain(values_b) {
        if !v.is_finite() {
            return Err(Error::invalid("histogram population contains non-finite value"));
        }
    }
    let lo = values_a
        .iter()
        .chain(values_b)
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = values_a
        .iter()
        .chain(values_b)
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    if lo == hi {
        // Degenerate single-point distribution.
        let edges = vec![lo - 0.5, lo + 0.5];
        let h = ProbabilityHistogram {
            edges,
            mass: vec![1.0],
        };
        return Ok((h.clone(), h));
    }

    let edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    let hist_a = histogram_over(values_a, &edges, lo, hi, bins, epsilon);
    let hist_b = histogram_over(values_b, &edges, lo, hi, bins, epsilon);
    Ok((hist_a, hist_b))
}

fn histogram_over(
    values: &[f64],
    edges: &[f64],
    lo: f64,
    hi: f64,
    bins: usize,
    epsilon: f64,
) -> ProbabilityHistogram {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let mut idx = ((v - lo) / width) as usize;
        if idx >= bins {
            idx = bins - 1; // last bin is closed
        }
        counts[idx] += 1;
    }
    let denom = values.len() as f64 + bins as f64 * epsilon;
    let mass = counts
        .iter()
        .map(|&c| (c as f64 + epsilon) / denom)
        .collect();
    ProbabilityHistogram {
        edges: edges.to_vec(),
        mass,
    }
}

/// KL divergence in nats: sum of p_i * ln(p_i / q_i).
///
/// Asymmetric; callers fix the direction. Requires identical edges and
/// smoothed (strictly positive) mass.
pub fn kl_divergence(p: &ProbabilityHistogram, q: &ProbabilityHistogram) -> Result<f64> {
    if p.edges != q.edges {
        return Err(Error::IncomparableHistograms);
    }
    Ok(p.mass
        .iter()
        .zip(&q.mass)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum())
}

/// L2 norm of the element-wise difference.
pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            context: "euclidean distance operands".into(),
            len_a: a.len(),
            len_b: b.len(),
        });
    }
    Ok(a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Compares two checkpoints layer by layer.
///
/// Per layer, the histogram population is all weight AND bias values of that
/// layer concatenated in tensor order. KL direction is first checkpoint
/// against second. The report flags the argmax-KL and argmax-ED layers.
pub fn diverge_checkpoints(
    a: &Checkpoint,
    b: &Checkpoint,
    exclusion: &BTreeSet<String>,
    bins: usize,
    epsilon: f64,
) -> Result<DivergenceReport> {
    let pairing = pair_layers(a, b, exclusion);
    if pairing.pairs.is_empty() {
        return Err(Error::NoPairedLayers);
    }
    let mut layers = Vec::with_capacity(pairing.pairs.len());
    for pair in &pairing.pairs {
        layers.push(diverge_layer(pair, bins, epsilon)?);
    }
    let max_kl_layer = argmax_layer(&layers, |l| l.kl);
    let max_ed_layer = argmax_layer(&layers, |l| l.ed);
    Ok(DivergenceReport {
        direction: "kl(first || second)",
        population: "weights+biases",
        bins,
        epsilon,
        layers,
        max_kl_layer,
        max_ed_layer,
    })
}

fn diverge_layer(pair: &LayerPair, bins: usize, epsilon: f64) -> Result<LayerDivergence> {
    let flatten = |tensors: &[&crate::tensors::NamedTensor]| -> Vec<f64> {
        tensors
            .iter()
            .flat_map(|t| t.values.iter().map(|&v| v as f64))
            .collect()
    };
    let pop_a = flatten(&pair.tensors_a);
    let pop_b = flatten(&pair.tensors_b);
    if pop_a.len() != pop_b.len() {
        return Err(Error::LengthMismatch {
            context: format!("layer '{}'", pair.layer),
            len_a: pop_a.len(),
            len_b: pop_b.len(),
        });
    }
    let (hist_a, hist_b) = estimate_histogram_pair(&pop_a, &pop_b, bins, epsilon)?;
    let kl = kl_divergence(&hist_a, &hist_b)?;
    let ed = euclidean_distance(&pop_a, &pop_b)?;
    Ok(LayerDivergence {
        layer: pair.layer.clone(),
        kl,
        ed,
        sample_counts: (pop_a.len(), pop_b.len()),
    })
}

fn argmax_layer(layers: &[LayerDivergence], value: impl Fn(&LayerDivergence) -> f64) -> String {
    let mut best = 0usize;
    for i in 1..layers.len() {
        if value(&layers[i]) > value(&layers[best]) {
            best = i;
        }
    }
    layers[best].layer.clone()
}

impl DivergenceReport {
    /// Aligned text table: layers as rows, D_KL and D_ED as columns.
    /// `*` marks the argmax of each column.
    pub fn render_table(&self) -> String {
        let name_w = self
            .layers
            .iter()
            .map(|l| l.layer.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut out = String::new();
        out.push_str(&format!(
            "{:<name_w$}  {:>12}  {:>14}  {:>14}\n",
            "layer", "n", "D_KL", "D_ED"
        ));
        for l in &self.layers {
            let kl_mark = if l.layer == self.max_kl_layer { " *" } else { "  " };
            let ed_mark = if l.layer == self.max_ed_layer { " *" } else { "  " };
            out.push_str(&format!(
                "{:<name_w$}  {:>12}  {:>12.6}{}  {:>12.6}{}\n",
                l.layer, l.sample_counts.0, l.kl, kl_mark, l.ed, ed_mark
            ));
        }
        out
    }
}

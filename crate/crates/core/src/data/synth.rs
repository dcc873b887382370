//! Deterministic synthetic seafloor-texture generator.
//!
//! Four texture families stand in for the flat / sand-ripple / rocky / crater
//! classes: they are visual analogues chosen for mutual separability, not
//! physical simulations. Every image is a pure function of (class, size,
//! seed, params).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, GrayImage, LabeledImage};
use crate::error::{Error, Result};
use crate::seeds;

/// The four texture classes, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextureClass {
    Flat,
    Ripple,
    Rocky,
    Crater,
}

impl TextureClass {
    pub const ALL: [TextureClass; 4] = [
        TextureClass::Flat,
        TextureClass::Ripple,
        TextureClass::Rocky,
        TextureClass::Crater,
    ];

    pub fn label(self) -> usize {
        match self {
            TextureClass::Flat => 0,
            TextureClass::Ripple => 1,
            TextureClass::Rocky => 2,
            TextureClass::Crater => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TextureClass::Flat => "flat",
            TextureClass::Ripple => "ripple",
            TextureClass::Rocky => "rocky",
            TextureClass::Crater => "crater",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "flat" => Some(TextureClass::Flat),
            "ripple" => Some(TextureClass::Ripple),
            "rocky" => Some(TextureClass::Rocky),
            "crater" => Some(TextureClass::Crater),
            _ => None,
        }
    }
}

/// Generator knobs shared by all four classes.
#[derive(Debug, Clone)]
pub struct SynthParams {
    /// Standard deviation of the additive Gaussian pixel noise.
    pub noise_sigma: f64,
    /// Grating frequency range in cycles per image width.
    pub ripple_freq: (f64, f64),
    /// Grating amplitude in gray levels.
    pub ripple_amplitude: f64,
    /// Value-noise octaves summed before thresholding.
    pub rocky_octaves: u32,
    /// Lattice cell count of the coarsest octave.
    pub rocky_base_cells: usize,
    /// Gray-level offset of bright vs dark rocky patches.
    pub rocky_contrast: f64,
    /// Crater count range (inclusive).
    pub crater_count: (usize, usize),
    /// Crater radius range as a fraction of image size.
    pub crater_radius: (f64, f64),
    /// Gray levels subtracted inside the crater bowl.
    pub crater_depth: f64,
    /// Gray levels added on the crater rim.
    pub crater_rim: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            noise_sigma: 8.0,
            ripple_freq: (4.0, 9.0),
            ripple_amplitude: 45.0,
            rocky_octaves: 3,
            rocky_base_cells: 4,
            rocky_contrast: 40.0,
            crater_count: (3, 6),
            crater_radius: (0.06, 0.14),
            crater_depth: 70.0,
            crater_rim: 30.0,
        }
    }
}

const MID_GRAY: f64 = 128.0;
const MIN_SIZE: usize = 32;

/// Generates one square texture image of the given class.
pub fn synthesize_texture(
    class: TextureClass,
    size: usize,
    seed: u64,
    params: &SynthParams,
) -> Result<LabeledImage> {
    if size < MIN_SIZE {
        return Err(Error::invalid(format!(
            "texture size {size} below minimum {MIN_SIZE}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let field = match class {
        TextureClass::Flat => flat_field(size, &mut rng, params),
        TextureClass::Ripple => ripple_field(size, &mut rng, params),
        TextureClass::Rocky => rocky_field(size, &mut rng, params),
        TextureClass::Crater => crater_field(size, &mut rng, params),
    };
    let pixels = field
        .into_iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    Ok(LabeledImage {
        image: GrayImage::new(size, size, pixels)?,
        label: class.label(),
        source: format!("synthetic:{seed}"),
    })
}

fn noise_into(field: &mut [f64], rng: &mut ChaCha8Rng, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated above");
    for v in field.iter_mut() {
        *v += normal.sample(rng);
    }
}

fn flat_field(size: usize, rng: &mut ChaCha8Rng, p: &SynthParams) -> Vec<f64> {
    let mut field = vec![MID_GRAY; size * size];
    noise_into(&mut field, rng, p.noise_sigma);
    field
}

fn ripple_field(size: usize, rng: &mut ChaCha8Rng, p: &SynthParams) -> Vec<f64> {
    let theta = rng.gen_range(0.0..std::f64::consts::PI);
    let freq = rng.gen_range(p.ripple_freq.0..=p.ripple_freq.1);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let (sin_t, cos_t) = theta.sin_cos();
    let omega = std::f64::consts::TAU * freq / size as f64;
    let mut field = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let proj = x as f64 * cos_t + y as f64 * sin_t;
            field.push(MID_GRAY + p.ripple_amplitude * (omega * proj + phase).sin());
        }
    }
    noise_into(&mut field, rng, p.noise_sigma);
    field
}

fn rocky_field(size: usize, rng: &mut ChaCha8Rng, p: &SynthParams) -> Vec<f64> {
    let mut accum = vec![0.0f64; size * size];
    let mut amplitude = 1.0;
    for octave in 0..p.rocky_octaves {
        let cells = p.rocky_base_cells << octave;
        let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let scale = cells as f64 / size as f64;
        for y in 0..size {
            for x in 0..size {
                let fx = x as f64 * scale;
                let fy = y as f64 * scale;
                let x0 = (fx as usize).min(cells - 1);
                let y0 = (fy as usize).min(cells - 1);
                let tx = fx - x0 as f64;
                let ty = fy - y0 as f64;
                let stride = cells + 1;
                let v00 = lattice[y0 * stride + x0];
                let v10 = lattice[y0 * stride + x0 + 1];
                let v01 = lattice[(y0 + 1) * stride + x0];
                let v11 = lattice[(y0 + 1) * stride + x0 + 1];
                let v = v00 * (1.0 - tx) * (1.0 - ty)
                    + v10 * tx * (1.0 - ty)
                    + v01 * (1.0 - tx) * ty
                    + v11 * tx * ty;
                accum[y * size + x] += amplitude * v;
            }
        }
        amplitude *= 0.5;
    }
    let mut field: Vec<f64> = accum
        .into_iter()
        .map(|v| {
            if v > 0.0 {
                MID_GRAY + p.rocky_contrast
            } else {
                MID_GRAY - p.rocky_contrast
            }
        })
        .collect();
    noise_into(&mut field, rng, p.noise_sigma);
    field
}

fn crater_field(size: usize, rng: &mut ChaCha8Rng, p: &SynthParams) -> Vec<f64> {
    let mut field = vec![MID_GRAY; size * size];
    let count = rng.gen_range(p.crater_count.0..=p.crater_count.1);
    for _ in 0..count {
        let cx = rng.gen_range(0.0..size as f64);
        let cy = rng.gen_range(0.0..size as f64);
        let radius = rng.gen_range(p.crater_radius.0..=p.crater_radius.1) * size as f64;
        let rim_outer = radius * 1.35;
        let x_lo = (cx - rim_outer).floor().max(0.0) as usize;
        let x_hi = ((cx + rim_outer).ceil() as usize).min(size - 1);
        let y_lo = (cy - rim_outer).floor().max(0.0) as usize;
        let y_hi = ((cy + rim_outer).ceil() as usize).min(size - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                if d <= radius {
                    // Bowl: deepest at the center, shallowing toward the wall.
                    field[y * size + x] -= p.crater_depth * (1.0 - d / radius * 0.5);
                } else if d <= rim_outer {
                    field[y * size + x] += p.crater_rim;
                }
            }
        }
    }
    noise_into(&mut field, rng, p.noise_sigma);
    field
}

/// Generates a dataset with the requested per-class counts.
///
/// Per-image seeds are derived from the master seed by a stable counter that
/// runs over classes in label order, so any image can be regenerated in
/// isolation.
pub fn synthesize_dataset(
    counts: &[(TextureClass, usize)],
    size: usize,
    seed: u64,
    params: &SynthParams,
) -> Result<Dataset> {
    if counts.iter().all(|&(_, n)| n == 0) {
        return Err(Error::invalid("all class counts are zero"));
    }
    let mut per_class = [0usize; 4];
    for &(class, n) in counts {
        per_class[class.label()] += n;
    }
    let mut images = Vec::new();
    let mut counter = 0u64;
    for class in TextureClass::ALL {
        for _ in 0..per_class[class.label()] {
            let img_seed = seeds::derive(seed, counter);
            images.push(synthesize_texture(class, size, img_seed, params)?);
            counter += 1;
        }
    }
    Dataset::new(
        images,
        TextureClass::ALL.iter().map(|c| c.name().into()).collect(),
    )
}

//! Grayscale images, labeled datasets, PGM I/O, directory ingestion, and the
//! synthetic seafloor-texture generator.

mod ingest;
mod pgm;
mod synth;

pub use ingest::{ingest_directory, write_dataset_tree, IngestReport, Manifest, ManifestEntry};
pub use pgm::{read_pgm, read_pgm_file, write_pgm, write_pgm_file};
pub use synth::{synthesize_dataset, synthesize_texture, SynthParams, TextureClass};

use crate::error::{Error, Result};

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// A grayscale image with its class label and provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: GrayImage,
    pub label: usize,
    /// File path, or "synthetic:<seed>" for generated images.
    pub source: String,
}

impl LabeledImage {
    pub fn width(&self) -> usize {
        self.image.width
    }

    pub fn height(&self) -> usize {
        self.image.height
    }
}

/// Ordered collection of labeled images with a per-class census.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<LabeledImage>,
    pub class_names: Vec<String>,
    pub census: Vec<usize>,
}

impl Dataset {
    pub fn new(images: Vec<LabeledImage>, class_names: Vec<String>) -> Result<Self> {
        let mut census = vec![0usize; class_names.len()];
        for img in &images {
            if img.label >= class_names.len() {
                return Err(Error::LabelOutOfRange {
                    label: img.label,
                    class_count: class_names.len(),
                });
            }
            census[img.label] += 1;
        }
        Ok(Dataset {
            images,
            class_names,
            census,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.images.iter().map(|i| i.label).collect()
    }
}

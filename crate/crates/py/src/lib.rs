//! Python bindings for the tunescope toolkit.
//!
//! Exposes the main types and operations: synthetic dataset generation, PGM
//! and NTF I/O, reference-net training, checkpoint divergence, superpixel
//! segmentation, local explanations, and cross-validated head evaluation.
//! Report-shaped results come back as JSON strings so Python can `json.loads`
//! them without a conversion layer.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use tunescope_core::data as core_data;
use tunescope_core::data::{GrayImage, LabeledImage, SynthParams, TextureClass};
use tunescope_core::divergence as core_div;
use tunescope_core::evaluation as core_eval;
use tunescope_core::explainer as core_explain;
use tunescope_core::predictors as core_pred;
use tunescope_core::predictors::Predictor;
use tunescope_core::tensors as core_tensors;

fn to_py_err(err: tunescope_core::Error) -> PyErr {
    match &err {
        tunescope_core::Error::Io(_) => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// 8-bit grayscale image.
#[pyclass(name = "Image")]
#[derive(Clone)]
struct PyImage {
    inner: GrayImage,
    #[pyo3(get)]
    label: Option<usize>,
    #[pyo3(get)]
    source: Option<String>,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(width: usize, height: usize, pixels: Vec<u8>) -> PyResult<Self> {
        Ok(PyImage {
            inner: GrayImage::new(width, height, pixels).map_err(to_py_err)?,
            label: None,
            source: None,
        })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn pixels(&self) -> Vec<u8> {
        self.inner.pixels.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}, label={:?})",
            self.inner.width, self.inner.height, self.label
        )
    }
}

/// Labeled image collection with a per-class census.
#[pyclass(name = "Dataset")]
struct PyDataset {
    inner: core_data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names.clone()
    }

    #[getter]
    fn census(&self) -> HashMap<String, usize> {
        self.inner
            .class_names
            .iter()
            .cloned()
            .zip(self.inner.census.iter().copied())
            .collect()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn image(&self, index: usize) -> PyResult<PyImage> {
        let img = self
            .inner
            .images
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("index {index} out of range")))?;
        Ok(PyImage {
            inner: img.image.clone(),
            label: Some(img.label),
            source: Some(img.source.clone()),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} images, classes {:?})",
            self.inner.len(),
            self.inner.class_names
        )
    }
}

/// One-hidden-layer rectifier network: the trainable stand-in classifier.
#[pyclass(name = "ReferenceNet")]
struct PyReferenceNet {
    inner: core_pred::ReferenceNet,
}

#[pymethods]
impl PyReferenceNet {
    #[new]
    fn new(input_dim: usize, hidden_dim: usize, class_count: usize, seed: u64) -> PyResult<Self> {
        Ok(PyReferenceNet {
            inner: core_pred::ReferenceNet::new(input_dim, hidden_dim, class_count, seed)
                .map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = core_tensors::read_checkpoint_file(&path).map_err(to_py_err)?;
        Ok(PyReferenceNet {
            inner: core_pred::ReferenceNet::import_checkpoint(&ckpt).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<u64> {
        core_tensors::write_checkpoint_file(&self.inner.export_checkpoint(), &path)
            .map_err(to_py_err)
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    #[getter]
    fn hidden_dim(&self) -> usize {
        self.inner.hidden_dim()
    }

    /// Trains in place and returns the per-epoch mean loss.
    #[pyo3(signature = (dataset, epochs=100, learning_rate=1e-4, batch_size=6, freeze=vec![], seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        dataset: &PyDataset,
        epochs: usize,
        learning_rate: f64,
        batch_size: usize,
        freeze: Vec<String>,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let cfg = core_pred::TrainConfig {
            learning_rate,
            batch_size,
            epochs,
            freeze: freeze.into_iter().collect(),
            seed,
            ..core_pred::TrainConfig::default()
        };
        let log = core_pred::train_reference(&mut self.inner, &dataset.inner.images, &cfg)
            .map_err(to_py_err)?;
        Ok(log.epoch_loss)
    }

    fn predict(&self, image: &PyImage) -> PyResult<Vec<f64>> {
        let mut rows = self
            .inner
            .predict(std::slice::from_ref(&image.inner))
            .map_err(to_py_err)?;
        Ok(rows.remove(0))
    }

    fn penultimate(&self, image: &PyImage) -> PyResult<Vec<f64>> {
        let mut rows = self
            .inner
            .penultimate_features(std::slice::from_ref(&image.inner))
            .map_err(to_py_err)?;
        Ok(rows.remove(0))
    }

    fn __repr__(&self) -> String {
        format!(
            "ReferenceNet(input={}, hidden={}, classes={})",
            self.inner.input_dim(),
            self.inner.hidden_dim(),
            self.inner.class_count()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (counts, size=64, seed=0, noise_sigma=8.0))]
fn synthesize_dataset(
    counts: HashMap<String, usize>,
    size: usize,
    seed: u64,
    noise_sigma: f64,
) -> PyResult<PyDataset> {
    let mut parsed = Vec::new();
    for (name, n) in &counts {
        let class = TextureClass::from_name(name).ok_or_else(|| {
            PyValueError::new_err(format!("unknown class '{name}' (flat|ripple|rocky|crater)"))
        })?;
        parsed.push((class, *n));
    }
    parsed.sort_by_key(|(c, _)| c.label());
    let params = SynthParams {
        noise_sigma,
        ..SynthParams::default()
    };
    Ok(PyDataset {
        inner: core_data::synthesize_dataset(&parsed, size, seed, &params).map_err(to_py_err)?,
    })
}

#[pyfunction]
fn ingest_directory(path: PathBuf) -> PyResult<(PyDataset, Vec<String>)> {
    let report = core_data::ingest_directory(&path).map_err(to_py_err)?;
    Ok((
        PyDataset {
            inner: report.dataset,
        },
        report.warnings,
    ))
}

#[pyfunction]
fn write_dataset_tree(dataset: &PyDataset, path: PathBuf) -> PyResult<String> {
    let manifest = core_data::write_dataset_tree(&dataset.inner, &path).map_err(to_py_err)?;
    serde_json::to_string(&manifest).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn read_pgm(path: PathBuf) -> PyResult<PyImage> {
    Ok(PyImage {
        inner: core_data::read_pgm_file(&path).map_err(to_py_err)?,
        label: None,
        source: Some(path.display().to_string()),
    })
}

#[pyfunction]
fn write_pgm(image: &PyImage, path: PathBuf) -> PyResult<()> {
    core_data::write_pgm_file(&image.inner, &path).map_err(to_py_err)
}

#[pyfunction]
#[pyo3(signature = (class_name, size=64, seed=0, noise_sigma=8.0))]
fn synthesize_texture(
    class_name: &str,
    size: usize,
    seed: u64,
    noise_sigma: f64,
) -> PyResult<PyImage> {
    let class = TextureClass::from_name(class_name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown class '{class_name}'")))?;
    let params = SynthParams {
        noise_sigma,
        ..SynthParams::default()
    };
    let img = core_data::synthesize_texture(class, size, seed, &params).map_err(to_py_err)?;
    let LabeledImage {
        image,
        label,
        source,
    } = img;
    Ok(PyImage {
        inner: image,
        label: Some(label),
        source: Some(source),
    })
}

/// Returns (labels, segment_count) of the grid segmenter.
#[pyfunction]
fn segment_grid(image: &PyImage, cell: usize) -> PyResult<(Vec<u32>, usize)> {
    let map = tunescope_core::segmentation::segment_grid(&image.inner, cell).map_err(to_py_err)?;
    Ok((map.labels, map.segment_count))
}

/// Returns (labels, segment_count) of the SLIC-style segmenter.
#[pyfunction]
#[pyo3(signature = (image, target_segments=50, compactness=10.0, iterations=10, seed=0))]
fn segment_slic(
    image: &PyImage,
    target_segments: usize,
    compactness: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<(Vec<u32>, usize)> {
    let map = tunescope_core::segmentation::segment_slic(
        &image.inner,
        target_segments,
        compactness,
        iterations,
        seed,
    )
    .map_err(to_py_err)?;
    Ok((map.labels, map.segment_count))
}

/// Shared-edge histogram pair: returns (edges, mass_a, mass_b).
#[pyfunction]
#[pyo3(signature = (values_a, values_b, bins=100, epsilon=1e-10))]
fn estimate_histogram_pair(
    values_a: Vec<f64>,
    values_b: Vec<f64>,
    bins: usize,
    epsilon: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (p, q) = core_div::estimate_histogram_pair(&values_a, &values_b, bins, epsilon)
        .map_err(to_py_err)?;
    Ok((p.edges, p.mass, q.mass))
}

/// KL divergence (nats) between two mass vectors over shared edges.
#[pyfunction]
fn kl_divergence(edges: Vec<f64>, mass_p: Vec<f64>, mass_q: Vec<f64>) -> PyResult<f64> {
    let p = core_div::ProbabilityHistogram {
        edges: edges.clone(),
        mass: mass_p,
    };
    let q = core_div::ProbabilityHistogram {
        edges,
        mass: mass_q,
    };
    p.validate().map_err(to_py_err)?;
    q.validate().map_err(to_py_err)?;
    core_div::kl_divergence(&p, &q).map_err(to_py_err)
}

#[pyfunction]
fn euclidean_distance(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    core_div::euclidean_distance(&a, &b).map_err(to_py_err)
}

/// Full divergence report between two NTF files, as a JSON string.
#[pyfunction]
#[pyo3(signature = (first, second, exclude=vec![], bins=100, epsilon=1e-10))]
fn diverge_files(
    first: PathBuf,
    second: PathBuf,
    exclude: Vec<String>,
    bins: usize,
    epsilon: f64,
) -> PyResult<String> {
    let a = core_tensors::read_checkpoint_file(&first).map_err(to_py_err)?;
    let b = core_tensors::read_checkpoint_file(&second).map_err(to_py_err)?;
    let exclusion: BTreeSet<String> = exclude.into_iter().collect();
    let report =
        core_div::diverge_checkpoints(&a, &b, &exclusion, bins, epsilon).map_err(to_py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Explains one prediction of a reference net. Returns
/// (segment_labels, segment_count, explanations_json).
#[pyfunction]
#[pyo3(signature = (image, net, classes=vec![], num_samples=1000, sigma=0.25, distance="cosine",
                    max_features=5, ridge_lambda=1.0, segments=50, compactness=10.0,
                    iterations=10, seed=0))]
#[allow(clippy::too_many_arguments)]
fn explain(
    image: &PyImage,
    net: &PyReferenceNet,
    classes: Vec<usize>,
    num_samples: usize,
    sigma: f64,
    distance: &str,
    max_features: usize,
    ridge_lambda: f64,
    segments: usize,
    compactness: f64,
    iterations: usize,
    seed: u64,
) -> PyResult<(Vec<u32>, usize, String)> {
    let distance = match distance {
        "cosine" => core_explain::DistanceKind::Cosine,
        "euclidean" => core_explain::DistanceKind::Euclidean,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown distance '{other}' (cosine|euclidean)"
            )))
        }
    };
    let cfg = core_explain::LimeConfig {
        num_samples,
        sigma,
        distance,
        max_features,
        ridge_lambda,
        replacement: core_explain::Replacement::SegmentMean,
        seed,
    };
    let segmenter = core_explain::Segmenter::Slic {
        target_segments: segments,
        compactness,
        iterations,
        seed,
    };
    let (map, exps) =
        core_explain::explain_instance(&image.inner, &net.inner, &segmenter, &cfg, &classes)
            .map_err(to_py_err)?;
    let json = serde_json::to_string(&exps).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((map.labels, map.segment_count, json))
}

#[pyfunction]
fn stratified_folds(labels: Vec<usize>, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    let plan = core_eval::stratified_folds(&labels, k, seed).map_err(to_py_err)?;
    Ok(plan.assignments)
}

#[pyfunction]
fn balanced_sampler(labels: Vec<usize>, draw_count: usize, seed: u64) -> PyResult<Vec<usize>> {
    core_eval::balanced_sampler(&labels, draw_count, seed).map_err(to_py_err)
}

/// Cross-validated evaluation of one head on penultimate features. Returns
/// the EvalReport as a JSON string.
#[pyfunction]
#[pyo3(signature = (dataset, net, head="knn", balanced=false, folds=3, seed=0,
                    knn_k=3, svm_c=1.0, svm_epochs=50, fc_epochs=30))]
#[allow(clippy::too_many_arguments)]
fn evaluate(
    dataset: &PyDataset,
    net: &PyReferenceNet,
    head: &str,
    balanced: bool,
    folds: usize,
    seed: u64,
    knn_k: usize,
    svm_c: f64,
    svm_epochs: usize,
    fc_epochs: usize,
) -> PyResult<String> {
    let spec = match head {
        "knn" => core_eval::HeadSpec::Knn { k: knn_k },
        "svm" => core_eval::HeadSpec::Svm {
            c_slack: svm_c,
            epochs: svm_epochs,
        },
        "fc" => core_eval::HeadSpec::Softmax(core_pred::TrainConfig {
            epochs: fc_epochs,
            seed,
            ..core_pred::TrainConfig::default()
        }),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown head '{other}' (knn|svm|fc)"
            )))
        }
    };
    let plan = core_eval::stratified_folds(&dataset.inner.labels(), folds, seed).map_err(to_py_err)?;
    let report = core_eval::run_experiment(
        &dataset.inner,
        &core_eval::FeatureSource::Penultimate(&net.inner),
        &spec,
        &plan,
        balanced,
        seed,
    )
    .map_err(to_py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pymodule]
fn tunescope_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyReferenceNet>()?;
    m.add_function(wrap_pyfunction!(synthesize_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_texture, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_directory, m)?)?;
    m.add_function(wrap_pyfunction!(write_dataset_tree, m)?)?;
    m.add_function(wrap_pyfunction!(read_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(write_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(segment_grid, m)?)?;
    m.add_function(wrap_pyfunction!(segment_slic, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_histogram_pair, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(euclidean_distance, m)?)?;
    m.add_function(wrap_pyfunction!(diverge_files, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_folds, m)?)?;
    m.add_function(wrap_pyfunction!(balanced_sampler, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}

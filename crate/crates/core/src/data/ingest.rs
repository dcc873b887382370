//! Class-per-directory dataset trees: ingestion and emission.
//!
//! Layout: `root/<class_name>/*.pgm`. Class names are sorted
//! lexicographically to fix label indices; files are sorted by name within
//! each class, so ingestion order is a pure function of tree content.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pgm::{read_pgm_file, write_pgm_file};
use super::{Dataset, LabeledImage};
use crate::error::{Error, Result};

/// Result of ingesting a dataset tree.
#[derive(Debug)]
pub struct IngestReport {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
    pub skipped: usize,
}

/// Manifest written next to generated trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub class_names: Vec<String>,
    pub census: BTreeMap<String, usize>,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub class: String,
    pub label: usize,
}

pub fn ingest_directory(root: &Path) -> Result<IngestReport> {
    let mut class_dirs: Vec<String> = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            class_dirs.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    if class_dirs.is_empty() {
        return Err(Error::invalid(format!(
            "empty dataset root: no class directories under {}",
            root.display()
        )));
    }
    class_dirs.sort();

    let mut images = Vec::new();
    let mut warnings = Vec::new();
    let mut skipped = 0usize;
    for (label, class) in class_dirs.iter().enumerate() {
        let dir = root.join(class);
        let mut files: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().map_or(false, |ext| ext == "pgm"))
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        files.sort();
        if files.is_empty() {
            warnings.push(format!("class '{class}' has no .pgm files"));
        }
        for file in files {
            let path = dir.join(&file);
            match read_pgm_file(&path) {
                Ok(image) => images.push(LabeledImage {
                    image,
                    label,
                    source: path.to_string_lossy().into_owned(),
                }),
                Err(err) => {
                    warnings.push(format!("skipping {}: {err}", path.display()));
                    skipped += 1;
                }
            }
        }
    }
    let dataset = Dataset::new(images, class_dirs)?;
    Ok(IngestReport {
        dataset,
        warnings,
        skipped,
    })
}

/// Writes a dataset as a class-per-directory tree plus `manifest.json`.
///
/// Files are named `img_NNNNN.pgm` with a per-class counter, so identical
/// datasets always produce identical trees.
pub fn write_dataset_tree(dataset: &Dataset, root: &Path) -> Result<Manifest> {
    fs::create_dir_all(root)?;
    let mut counters = vec![0usize; dataset.class_count()];
    let mut files = Vec::new();
    for img in &dataset.images {
        let class = &dataset.class_names[img.label];
        let dir = root.join(class);
        fs::create_dir_all(&dir)?;
        let name = format!("img_{:05}.pgm", counters[img.label]);
        counters[img.label] += 1;
        write_pgm_file(&img.image, &dir.join(&name))?;
        files.push(ManifestEntry {
            path: format!("{class}/{name}"),
            class: class.clone(),
            label: img.label,
        });
    }
    let census = dataset
        .class_names
        .iter()
        .cloned()
        .zip(dataset.census.iter().copied())
        .collect();
    let manifest = Manifest {
        class_names: dataset.class_names.clone(),
        census,
        files,
    };
    let json = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| Error::invalid(format!("manifest serialization: {e}")))?;
    fs::write(root.join("manifest.json"), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::super::pgm::write_pgm;
    use super::super::GrayImage;
    use super::*;

    fn write_img(dir: &Path, name: &str, value: u8) {
        let img = GrayImage::filled(4, 4, value);
        fs::write(dir.join(name), write_pgm(&img)).unwrap();
    }

    #[test]
    fn ingest_counts_and_orders_classes() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        fs::create_dir(root.join("beta")).unwrap();
        fs::create_dir(root.join("alpha")).unwrap();
        write_img(&root.join("alpha"), "b.pgm", 1);
        write_img(&root.join("alpha"), "a.pgm", 2);
        write_img(&root.join("alpha"), "c.pgm", 3);
        write_img(&root.join("beta"), "x.pgm", 4);

        let report = ingest_directory(root).unwrap();
        assert_eq!(report.dataset.class_names, vec!["alpha", "beta"]);
        assert_eq!(report.dataset.census, vec![3, 1]);
        // Sorted by class, then filename.
        assert_eq!(report.dataset.images[0].image.pixels[0], 2);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn empty_class_dir_warns_with_zero_count() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        fs::create_dir(root.join("a")).unwrap();
        fs::create_dir(root.join("empty")).unwrap();
        write_img(&root.join("a"), "a.pgm", 1);

        let report = ingest_directory(root).unwrap();
        assert_eq!(report.dataset.census, vec![1, 0]);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn unreadable_image_skipped_and_counted() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        fs::create_dir(root.join("a")).unwrap();
        write_img(&root.join("a"), "good.pgm", 1);
        fs::write(root.join("a/bad.pgm"), b"P5\n2 2\n255\n\x01").unwrap();

        let report = ingest_directory(root).unwrap();
        assert_eq!(report.dataset.len(), 1);
        assert_eq!(report.skipped, 1);
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn empty_root_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(ingest_directory(tmp.path()).is_err());
    }

    #[test]
    fn ingest_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        fs::create_dir(root.join("a")).unwrap();
        write_img(&root.join("a"), "a.pgm", 1);
        write_img(&root.join("a"), "b.pgm", 2);
        let r1 = ingest_directory(root).unwrap();
        let r2 = ingest_directory(root).unwrap();
        assert_eq!(r1.dataset.images, r2.dataset.images);
    }

    #[test]
    fn tree_round_trips_through_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let img = GrayImage::filled(4, 4, 7);
        let ds = Dataset::new(
            vec![
                LabeledImage {
                    image: img.clone(),
                    label: 0,
                    source: "s".into(),
                },
                LabeledImage {
                    image: img,
                    label: 1,
                    source: "s".into(),
                },
            ],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let manifest = write_dataset_tree(&ds, tmp.path()).unwrap();
        assert_eq!(manifest.files.len(), 2);
        assert_eq!(manifest.census["a"], 1);

        let back = ingest_directory(tmp.path()).unwrap();
        assert_eq!(back.dataset.class_names, ds.class_names);
        assert_eq!(back.dataset.census, ds.census);
    }
}

//! IDX and CSV readers, and the datasets an experiment runs on.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::noise::stream_rng;

use super::config::{DataConfig, DataSource};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const IDX_CLASSES: usize = 10;

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(path, format!("file ends inside the header at offset {offset}")))
}

/// Reads an IDX image file (`0x803`) and its label file (`0x801`).
/// Intensities are divided by 255.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;

    let magic = read_u32(&img, 0, images)?;
    if magic != IDX_IMAGES {
        return Err(format_err(images, format!("magic {magic:#010x} at offset 0, expected {IDX_IMAGES:#010x}")));
    }
    let n = read_u32(&img, 4, images)? as usize;
    let rows = read_u32(&img, 8, images)? as usize;
    let cols = read_u32(&img, 12, images)? as usize;
    let p = rows * cols;
    if p == 0 {
        return Err(format_err(images, "images have zero pixels"));
    }
    let want = 16 + n * p;
    if img.len() != want {
        return Err(format_err(
            images,
            format!("expected {want} bytes for {n} images of {rows}x{cols}, found {}", img.len()),
        ));
    }

    let magic = read_u32(&lab, 0, labels)?;
    if magic != IDX_LABELS {
        return Err(format_err(labels, format!("magic {magic:#010x} at offset 0, expected {IDX_LABELS:#010x}")));
    }
    let n_lab = read_u32(&lab, 4, labels)? as usize;
    if n_lab != n {
        return Err(format_err(labels, format!("count {n_lab} at offset 4 does not match {n} images")));
    }
    if lab.len() != 8 + n {
        return Err(format_err(labels, format!("expected {} bytes, found {}", 8 + n, lab.len())));
    }
    let mut y = Vec::with_capacity(n);
    for (i, &l) in lab[8..].iter().enumerate() {
        if l as usize >= IDX_CLASSES {
            return Err(format_err(labels, format!("label {l} at offset {} is outside 0..9", 8 + i)));
        }
        y.push(l as usize);
    }
    let x: Vec<f64> = img[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Dataset::new(x, y, p, IDX_CLASSES)
}

/// Reads a numeric CSV with a header row. `label_column` is a header name or
/// a 0-based column index; distinct label values are mapped to `0..C` in
/// increasing order.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    let header = rd.headers().map_err(|e| format_err(path, e.to_string()))?.clone();
    let col = match header.iter().position(|h| h.trim() == label_column) {
        Some(c) => c,
        None => label_column
            .parse::<usize>()
            .ok()
            .filter(|&c| c < header.len())
            .ok_or_else(|| format_err(path, format!("no label column {label_column:?} in header")))?,
    };
    let width = header.len();
    if width < 2 {
        return Err(format_err(path, "need a label column and at least one feature"));
    }
    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, rec) in rd.records().enumerate() {
        let line = r + 2;
        let rec = rec.map_err(|e| format_err(path, format!("line {line}: {e}")))?;
        if rec.len() != width {
            return Err(format_err(path, format!("line {line} has {} fields, expected {width}", rec.len())));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| format_err(path, format!("line {line}, column {}: {cell:?} is not a number", j + 1)))?;
            if !v.is_finite() {
                return Err(format_err(path, format!("line {line}, column {}: non-finite value", j + 1)));
            }
            if j == col {
                raw_labels.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if raw_labels.is_empty() {
        return Err(format_err(path, "no data rows"));
    }
    let mut distinct: BTreeMap<u64, usize> = BTreeMap::new();
    let mut sorted = raw_labels.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for (k, v) in sorted.iter().enumerate() {
        distinct.insert(v.to_bits(), k);
    }
    if sorted.len() < 2 {
        return Err(format_err(path, format!("only one class ({}) present; need at least 2", sorted[0])));
    }
    let labels = raw_labels.iter().map(|v| distinct[&v.to_bits()]).collect();
    Dataset::new(features, labels, width - 1, sorted.len())
}

/// Training and held-out data for one experiment.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
}

fn need<'a>(p: &'a Option<std::path::PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::invalid(format!("data.{what} is required for this data source")))
}

/// Loads or generates the configured data. Synthetic sets share one
/// generating weight vector drawn from `seed`.
pub fn load_data(cfg: &DataConfig, seed: u64) -> Result<DataSplit> {
    let (train, test) = match cfg.source {
        DataSource::Synthetic => {
            let mut rng = stream_rng(seed, 7);
            let (p, c) = (cfg.features, cfg.classes);
            let truth: Vec<f64> = (0..p * c)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    cfg.signal * z
                })
                .collect();
            let train = Dataset::synthetic_scaled_rows(&mut rng, cfg.n_train, p, c, &truth, cfg.row_sigma)?;
            let test = Dataset::synthetic_scaled_rows(&mut rng, cfg.n_test, p, c, &truth, cfg.row_sigma)?;
            (train, test)
        }
        DataSource::Idx => (
            load_idx(need(&cfg.train_images, "train_images")?, need(&cfg.train_labels, "train_labels")?)?,
            load_idx(need(&cfg.test_images, "test_images")?, need(&cfg.test_labels, "test_labels")?)?,
        ),
        DataSource::Csv => {
            let train = load_csv(need(&cfg.train_csv, "train_csv")?, &cfg.label_column)?;
            let test = load_csv(need(&cfg.test_csv, "test_csv")?, &cfg.label_column)?;
            if train.num_features() != test.num_features() || train.num_classes() != test.num_classes() {
                return Err(Error::invalid("train and test CSV files disagree in shape"));
            }
            (train, test)
        }
    };
    let train = match cfg.max_train {
        Some(n) if n < train.len() => train.truncate(n)?,
        _ => train,
    };
    let train = train.truncate_to_multiple(cfg.batch_size)?;
    Ok(DataSplit {
        train: Arc::new(train),
        test: Arc::new(test),
    })
}

/// Paths of every input file, for the manifest hash.
pub fn input_files(cfg: &DataConfig) -> Vec<&Path> {
    let paths = match cfg.source {
        DataSource::Synthetic => vec![],
        DataSource::Idx => vec![&cfg.train_images, &cfg.train_labels, &cfg.test_images, &cfg.test_labels],
        DataSource::Csv => vec![&cfg.train_csv, &cfg.test_csv],
    };
    paths.into_iter().filter_map(|p| p.as_deref()).collect()
}

//! Synthetic dataset generation and external loading: Gaussian blobs, the
//! big-endian IDX image/label format, CSV datasets, train-statistics
//! standardization, and noisy-label overlay files.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::numeric::pairwise_sum;
use crate::rng::{mix, tag, SplitMix64};

/// A labeled dataset. `clean_labels` is retained after corruption so the
/// harness can split training accuracy into clean and flipped partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub k: usize,
    pub clean_labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(CoreError::Shape(format!(
                "{} feature rows but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        let dim = self.dim();
        for (n, row) in self.features.iter().enumerate() {
            if row.len() != dim {
                return Err(CoreError::Shape(format!(
                    "feature row {n} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::InvalidInput(format!(
                    "feature row {n} has a non-finite entry"
                )));
            }
        }
        for (n, &y) in self.labels.iter().enumerate() {
            if y >= self.k {
                return Err(CoreError::InvalidInput(format!(
                    "label {y} at row {n} is outside the {} classes",
                    self.k
                )));
            }
        }
        if let Some(clean) = &self.clean_labels {
            if clean.len() != self.labels.len() {
                return Err(CoreError::Shape(
                    "clean label sequence length does not match the dataset".to_string(),
                ));
            }
        }
        Ok(())
    }
}

/// Balanced Gaussian blobs with centers at pairwise distance at least
/// `4 * spread`; see [`gen_gaussian_blobs_with_sep`] for a custom
/// separation.
pub fn gen_gaussian_blobs(
    k: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    gen_gaussian_blobs_with_sep(k, per_class, dim, spread, 4.0 * spread, seed)
}

/// Balanced Gaussian blobs: class centers are distinct hypercube corners
/// scaled so the minimum pairwise distance is `min_sep`, and each class
/// gets `per_class` isotropic samples of standard deviation `spread`.
pub fn gen_gaussian_blobs_with_sep(
    k: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    min_sep: f64,
    seed: u64,
) -> Result<Dataset> {
    let centers = blob_centers(k, dim, min_sep, seed)?;
    sample_blobs(&centers, per_class, spread, mix(seed, tag("samples")))
}

/// Train/test pair drawn around the *same* centers, from independent
/// sample streams of one seed.
pub fn gen_gaussian_blob_split(
    k: usize,
    train_per_class: usize,
    test_per_class: usize,
    dim: usize,
    spread: f64,
    min_sep: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let centers = blob_centers(k, dim, min_sep, seed)?;
    let train = sample_blobs(&centers, train_per_class, spread, mix(seed, tag("train")))?;
    let test = sample_blobs(&centers, test_per_class, spread, mix(seed, tag("test")))?;
    Ok((train, test))
}

/// Class centers: distinct random sign vectors scaled so the closest pair
/// sits exactly `min_sep` apart.
fn blob_centers(k: usize, dim: usize, min_sep: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k < 2 {
        return Err(CoreError::Config(format!("need at least 2 classes, got {k}")));
    }
    if dim < 2 {
        return Err(CoreError::Config(format!("need at least 2 features, got {dim}")));
    }
    if min_sep <= 0.0 {
        return Err(CoreError::Config("separation must be positive".to_string()));
    }
    if dim < 60 && k as u128 > (1u128 << dim) {
        return Err(CoreError::Config(format!(
            "cannot place {k} distinct corners in {dim} dimensions"
        )));
    }
    let mut rng = SplitMix64::new(mix(seed, tag("centers")));
    let mut corners: Vec<Vec<i8>> = Vec::with_capacity(k);
    let mut guard = 0;
    while corners.len() < k {
        guard += 1;
        if guard > 100_000 {
            return Err(CoreError::Generation(
                "could not draw distinct blob centers".to_string(),
            ));
        }
        let cand: Vec<i8> = (0..dim)
            .map(|_| if rng.next_f64() < 0.5 { -1 } else { 1 })
            .collect();
        if !corners.contains(&cand) {
            corners.push(cand);
        }
    }
    // Minimum pairwise distance of the unscaled corners is 2*sqrt(m) where
    // m is the smallest number of differing coordinates.
    let mut min_diff = usize::MAX;
    for i in 0..k {
        for j in i + 1..k {
            let d = corners[i]
                .iter()
                .zip(&corners[j])
                .filter(|(a, b)| a != b)
                .count();
            min_diff = min_diff.min(d);
        }
    }
    let scale = min_sep / (2.0 * (min_diff as f64).sqrt());
    Ok(corners
        .into_iter()
        .map(|c| c.into_iter().map(|s| s as f64 * scale).collect())
        .collect())
}

fn sample_blobs(
    centers: &[Vec<f64>],
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if per_class == 0 {
        return Err(CoreError::Config("per_class must be positive".to_string()));
    }
    if spread <= 0.0 {
        return Err(CoreError::Config("spread must be positive".to_string()));
    }
    let k = centers.len();
    let mut features = Vec::with_capacity(k * per_class);
    let mut labels = Vec::with_capacity(k * per_class);
    for (class, center) in centers.iter().enumerate() {
        let mut class_rng = SplitMix64::new(mix(seed, class as u64));
        for _ in 0..per_class {
            let row: Vec<f64> = center.iter().map(|&c| c + spread * class_rng.normal()).collect();
            features.push(row);
            labels.push(class);
        }
    }
    let ds = Dataset {
        features,
        labels,
        k,
        clean_labels: None,
    };
    ds.validate()?;
    Ok(ds)
}

const IDX_IMAGE_MAGIC: u32 = 2051;
const IDX_LABEL_MAGIC: u32 = 2049;

fn read_be_u32(bytes: &[u8], pos: usize, path: &str) -> Result<u32> {
    if pos + 4 > bytes.len() {
        return Err(CoreError::format(
            path,
            format!("offset {pos}"),
            "truncated: expected a 4-byte big-endian integer",
        ));
    }
    Ok(u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()))
}

/// Loads an IDX image/label file pair (big-endian, magics 2051/2049).
/// Pixels are scaled to [0, 1] and flattened; the class count is the
/// largest label plus one, with a floor of 2.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let read_all = |p: &Path| -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        fs::File::open(p)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| CoreError::io(p.display().to_string(), e))?;
        Ok(buf)
    };
    let img_bytes = read_all(images_path)?;
    let lbl_bytes = read_all(labels_path)?;
    let img_path = images_path.display().to_string();
    let lbl_path = labels_path.display().to_string();

    let img_magic = read_be_u32(&img_bytes, 0, &img_path)?;
    if img_magic != IDX_IMAGE_MAGIC {
        return Err(CoreError::format(
            &img_path,
            "offset 0",
            format!("magic {img_magic}, expected {IDX_IMAGE_MAGIC} for an image file"),
        ));
    }
    let n = read_be_u32(&img_bytes, 4, &img_path)? as usize;
    let rows = read_be_u32(&img_bytes, 8, &img_path)? as usize;
    let cols = read_be_u32(&img_bytes, 12, &img_path)? as usize;
    let pixels = rows * cols;
    let expected = 16 + n * pixels;
    if img_bytes.len() != expected {
        return Err(CoreError::format(
            &img_path,
            format!("offset {}", img_bytes.len().min(expected)),
            format!("file is {} bytes, header implies {expected}", img_bytes.len()),
        ));
    }

    let lbl_magic = read_be_u32(&lbl_bytes, 0, &lbl_path)?;
    if lbl_magic != IDX_LABEL_MAGIC {
        return Err(CoreError::format(
            &lbl_path,
            "offset 0",
            format!("magic {lbl_magic}, expected {IDX_LABEL_MAGIC} for a label file"),
        ));
    }
    let n_lbl = read_be_u32(&lbl_bytes, 4, &lbl_path)? as usize;
    if lbl_bytes.len() != 8 + n_lbl {
        return Err(CoreError::format(
            &lbl_path,
            format!("offset {}", lbl_bytes.len().min(8 + n_lbl)),
            format!("file is {} bytes, header implies {}", lbl_bytes.len(), 8 + n_lbl),
        ));
    }
    if n != n_lbl {
        return Err(CoreError::format(
            &lbl_path,
            "offset 4",
            format!("{n_lbl} labels for {n} images"),
        ));
    }

    let mut features = Vec::with_capacity(n);
    for i in 0..n {
        let start = 16 + i * pixels;
        features.push(
            img_bytes[start..start + pixels]
                .iter()
                .map(|&b| b as f64 / 255.0)
                .collect(),
        );
    }
    let labels: Vec<usize> = lbl_bytes[8..].iter().map(|&b| b as usize).collect();
    let k = labels.iter().copied().max().unwrap_or(1).max(1) + 1;
    let ds = Dataset {
        features,
        labels,
        k,
        clean_labels: None,
    };
    ds.validate()?;
    Ok(ds)
}

/// Serializes a tiny IDX pair; used to build fixtures in tests and by the
/// data generator.
pub fn idx_bytes(images: &[Vec<u8>], rows: usize, cols: usize, labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::new();
    img.extend_from_slice(&IDX_IMAGE_MAGIC.to_be_bytes());
    img.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    for image in images {
        img.extend_from_slice(image);
    }
    let mut lbl = Vec::new();
    lbl.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lbl.extend_from_slice(labels);
    (img, lbl)
}

/// Per-feature affine transform fitted on a training set.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and standard deviation per feature. Zero-variance
    /// features get a zero scale so they map to zero.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.n() == 0 {
            return Err(CoreError::InvalidInput(
                "cannot fit a standardizer on an empty dataset".to_string(),
            ));
        }
        let dim = train.dim();
        let n = train.n() as f64;
        let mut mean = vec![0.0; dim];
        let mut column = vec![0.0; train.n()];
        for j in 0..dim {
            for (i, row) in train.features.iter().enumerate() {
                column[i] = row[j];
            }
            mean[j] = pairwise_sum(&column) / n;
        }
        let mut std = vec![0.0; dim];
        for j in 0..dim {
            for (i, row) in train.features.iter().enumerate() {
                let d = row[j] - mean[j];
                column[i] = d * d;
            }
            std[j] = (pairwise_sum(&column) / n).sqrt();
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, ds: &mut Dataset) -> Result<()> {
        if ds.dim() != self.mean.len() {
            return Err(CoreError::Shape(format!(
                "dataset has {} features, standardizer was fitted on {}",
                ds.dim(),
                self.mean.len()
            )));
        }
        for row in ds.features.iter_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.std[j] > 0.0 {
                    (*v - self.mean[j]) / self.std[j]
                } else {
                    0.0
                };
            }
        }
        Ok(())
    }
}

/// Fits statistics on `train` and applies them to `train` and every
/// dataset in `others`.
pub fn standardize(train: &mut Dataset, others: &mut [&mut Dataset]) -> Result<()> {
    let fitted = Standardizer::fit(train)?;
    fitted.apply(train)?;
    for ds in others.iter_mut() {
        fitted.apply(ds)?;
    }
    Ok(())
}

/// Applies a noisy-label overlay file to a dataset. Format: a header line
/// `index,label`, then one `index,noisy_label` record per line with
/// strictly ascending indices. Returns a new dataset with the listed
/// labels replaced and the original labels preserved in `clean_labels`.
pub fn load_label_overlay(path: &Path, dataset: &Dataset) -> Result<Dataset> {
    let content =
        fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    apply_label_overlay(&content, dataset, &path.display().to_string())
}

pub fn apply_label_overlay(content: &str, dataset: &Dataset, origin: &str) -> Result<Dataset> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "index,label" => {}
        Some((_, header)) => {
            return Err(CoreError::format(
                origin,
                "line 1",
                format!("expected header 'index,label', got '{}'", header.trim()),
            ))
        }
        None => {
            return Err(CoreError::format(origin, "line 1", "empty overlay file"));
        }
    }
    let mut out = dataset.clone();
    if out.clean_labels.is_none() {
        out.clean_labels = Some(dataset.labels.clone());
    }
    let mut last_index: Option<usize> = None;
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let loc = format!("line {}", lineno + 1);
        let (idx_str, lbl_str) = line.split_once(',').ok_or_else(|| {
            CoreError::format(origin, loc.clone(), "expected 'index,noisy_label'")
        })?;
        let index: usize = idx_str.trim().parse().map_err(|_| {
            CoreError::format(origin, loc.clone(), format!("bad index '{idx_str}'"))
        })?;
        let label: usize = lbl_str.trim().parse().map_err(|_| {
            CoreError::format(origin, loc.clone(), format!("bad label '{lbl_str}'"))
        })?;
        if index >= dataset.n() {
            return Err(CoreError::format(
                origin,
                loc,
                format!("index {index} outside the dataset of {} samples", dataset.n()),
            ));
        }
        if label >= dataset.k {
            return Err(CoreError::format(
                origin,
                loc,
                format!("label {label} outside the {} classes", dataset.k),
            ));
        }
        match last_index {
            Some(prev) if index == prev => {
                return Err(CoreError::format(origin, loc, format!("duplicate index {index}")))
            }
            Some(prev) if index < prev => {
                return Err(CoreError::format(
                    origin,
                    loc,
                    format!("indices must be ascending; {index} after {prev}"),
                ))
            }
            _ => {}
        }
        last_index = Some(index);
        out.labels[index] = label;
    }
    out.validate()?;
    Ok(out)
}

/// Writes a dataset as CSV with header `label,f1,...,fd`. Features are
/// rendered with 17 significant digits so loading is lossless.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("label");
    for j in 1..=ds.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (row, &y) in ds.features.iter().zip(&ds.labels) {
        out.push_str(&y.to_string());
        for v in row {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Loads a CSV dataset in the `label,f1,...,fd` layout.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let content =
        fs::read_to_string(path).map_err(|e| CoreError::io(path.display().to_string(), e))?;
    let origin = path.display().to_string();
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CoreError::format(&origin, "line 1", "empty file"))?;
    if !header.starts_with("label") {
        return Err(CoreError::format(
            &origin,
            "line 1",
            "expected a header starting with 'label'",
        ));
    }
    let dim = header.split(',').count() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let loc = format!("line {}", lineno + 1);
        let mut parts = line.split(',');
        let label: usize = parts
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|_| CoreError::format(&origin, loc.clone(), "bad label"))?;
        let row: Vec<f64> = parts
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| CoreError::format(&origin, loc.clone(), "bad feature value"))?;
        if row.len() != dim {
            return Err(CoreError::format(
                &origin,
                loc,
                format!("{} features, expected {dim}", row.len()),
            ));
        }
        labels.push(label);
        features.push(row);
    }
    let k = labels.iter().copied().max().unwrap_or(1).max(1) + 1;
    let ds = Dataset {
        features,
        labels,
        k,
        clean_labels: None,
    };
    ds.validate()?;
    Ok(ds)
}

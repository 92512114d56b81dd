//! Dataset ingestion: MNIST IDX containers, labelled image directories,
//! normalisation to the 32×32 working grid and stratified fold plans.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use byteorder::{BigEndian, ByteOrder};
use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::transform::ImageGrid;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Working grid side for recognition.
pub const TARGET_SIZE: usize = 32;

/// Grayscale grid straight from a decoder, before normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major samples.
    pub data: Vec<f64>,
    /// Largest representable sample value (255 for 8-bit sources).
    pub max_value: f64,
}

impl RawImage {
    pub fn from_u8(rows: usize, cols: usize, data: &[u8]) -> Self {
        Self {
            rows,
            cols,
            data: data.iter().map(|&v| f64::from(v)).collect(),
            max_value: 255.0,
        }
    }

    pub fn from_grid(grid: &ImageGrid) -> Self {
        Self {
            rows: grid.size(),
            cols: grid.size(),
            data: grid.pixels().to_vec(),
            max_value: 1.0,
        }
    }
}

fn format_err<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        offset,
        message: message.into(),
    })
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(BigEndian::read_u32(b)),
        None => format_err(offset, format!("truncated header reading {what}")),
    }
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != expected {
        return format_err(0, format!("magic {magic:#010x}, expected {expected:#010x}"));
    }
    Ok(())
}

/// Images of an IDX `ubyte` image file, row-major, values 0–255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4, "item count")? as usize;
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let per = rows * cols;
    let payload = &bytes[16..];
    let needed = count * per;
    if payload.len() < needed {
        return format_err(
            16 + payload.len(),
            format!(
                "payload truncated: {} of {needed} pixel bytes",
                payload.len()
            ),
        );
    }
    if per == 0 {
        return format_err(8, "zero-sized images");
    }
    Ok(payload[..needed]
        .chunks_exact(per)
        .map(|px| RawImage::from_u8(rows, cols, px))
        .collect())
}

/// Labels of an IDX `ubyte` label file; every label must be a digit.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4, "item count")? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return format_err(
            8 + payload.len(),
            format!("payload truncated: {} of {count} labels", payload.len()),
        );
    }
    payload[..count]
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if l > 9 {
                format_err(8 + i, format!("label {l} outside 0..=9"))
            } else {
                Ok(usize::from(l))
            }
        })
        .collect()
}

/// IDX image file for 8-bit grids of identical shape.
pub fn write_idx_images(images: &[RawImage]) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or((0, 0), |im| (im.rows, im.cols));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [
        IDX_IMAGES_MAGIC,
        images.len() as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for im in images {
        if im.rows != rows || im.cols != cols {
            return invalid("IDX images must share one shape");
        }
        out.extend(im.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l > 255 {
            return invalid(format!("label {l} does not fit a byte"));
        }
        out.push(l as u8);
    }
    Ok(out)
}

/// Reads a file, transparently inflating `.gz`.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn bilinear(raw: &RawImage, target: usize) -> Vec<f64> {
    let sy = raw.rows as f64 / target as f64;
    let sx = raw.cols as f64 / target as f64;
    let at = |r: usize, c: usize| raw.data[r * raw.cols + c];
    let mut out = Vec::with_capacity(target * target);
    for i in 0..target {
        let fy = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (raw.rows - 1) as f64);
        let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
        let y1 = (y0 + 1).min(raw.rows - 1);
        for j in 0..target {
            let fx = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (raw.cols - 1) as f64);
            let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
            let x1 = (x0 + 1).min(raw.cols - 1);
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x1) * tx;
            let bottom = at(y1, x0) * (1.0 - tx) + at(y1, x1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Brings a raw grid onto the `target`×`target` grid with values in [0, 1].
///
/// Sources four pixels smaller than the target on each side (28×28 MNIST
/// for a 32 target) are zero-padded symmetrically; same-size sources are
/// only rescaled; anything else is bilinearly resampled.
pub fn normalize(raw: &RawImage, target: usize) -> Result<ImageGrid> {
    if raw.rows == 0 || raw.cols == 0 || raw.data.is_empty() {
        return invalid("cannot normalise an empty grid");
    }
    if raw.data.len() != raw.rows * raw.cols {
        return invalid("raw grid data does not match its shape");
    }
    if !(raw.max_value.is_finite() && raw.max_value > 0.0) {
        return invalid("raw grid max value must be positive");
    }
    let scale = 1.0 / raw.max_value;
    let pixels = if raw.rows == target && raw.cols == target {
        raw.data.iter().map(|v| v * scale).collect()
    } else if raw.rows + 4 == target && raw.cols + 4 == target {
        let mut out = vec![0.0; target * target];
        for r in 0..raw.rows {
            for c in 0..raw.cols {
                out[(r + 2) * target + c + 2] = raw.data[r * raw.cols + c] * scale;
            }
        }
        out
    } else {
        bilinear(raw, target)
            .into_iter()
            .map(|v| v * scale)
            .collect()
    };
    ImageGrid::new(target, pixels)
}

/// Decodes a PNG/PGM file to a grayscale raw grid.
pub fn load_image_file(path: &Path) -> Result<RawImage> {
    let img = image::open(path)?;
    Ok(match img {
        image::DynamicImage::ImageLuma16(_)
        | image::DynamicImage::ImageLumaA16(_)
        | image::DynamicImage::ImageRgb16(_)
        | image::DynamicImage::ImageRgba16(_) => {
            let g = img.to_luma16();
            RawImage {
                rows: g.height() as usize,
                cols: g.width() as usize,
                data: g.pixels().map(|p| f64::from(p.0[0])).collect(),
                max_value: 65535.0,
            }
        }
        _ => {
            let g = img.to_luma8();
            RawImage::from_u8(g.height() as usize, g.width() as usize, g.as_raw())
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub images: Vec<ImageGrid>,
    /// Index into `class_names` per image.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<ImageGrid>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return invalid(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return invalid(format!("label {bad} has no class name"));
        }
        if let Some(size) = images.first().map(ImageGrid::size) {
            if images.iter().any(|im| im.size() != size) {
                return invalid("dataset images differ in size");
            }
        }
        Ok(Self {
            images,
            labels,
            class_names,
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

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// First `limit` samples of each class, in dataset order.
    pub fn limit_per_class(&self, limit: usize) -> Self {
        let mut taken = vec![0usize; self.class_count()];
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let l = self.labels[i];
                taken[l] += 1;
                taken[l] <= limit
            })
            .collect();
        self.subset(&keep)
    }

    /// Indices of each class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn digit_names() -> Vec<String> {
    (0..10).map(|d| d.to_string()).collect()
}

/// Builds a dataset from parsed IDX images and labels.
pub fn dataset_from_idx(images: &[RawImage], labels: &[usize]) -> Result<LabeledDataset> {
    if images.len() != labels.len() {
        return invalid(format!(
            "{} IDX images but {} IDX labels",
            images.len(),
            labels.len()
        ));
    }
    let grids = images
        .iter()
        .map(|r| normalize(r, TARGET_SIZE))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(grids, labels.to_vec(), digit_names())
}

/// Pairs of `(images, labels)` IDX files in a directory, sorted by name.
/// Image files contain `idx3` in their name; the label file is the one whose
/// name is obtained by replacing `images-idx3` with `labels-idx1`.
pub fn find_idx_pairs(dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let mut pairs = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in &entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name.contains("images-idx3") {
            let label = dir.join(name.replace("images-idx3", "labels-idx1"));
            if label.exists() {
                pairs.push((path.clone(), label));
            } else {
                log::warn!("no label file next to {}", path.display());
            }
        }
    }
    Ok(pairs)
}

/// Every IDX image/label pair in `dir`, concatenated in file-name order.
pub fn load_idx_dir(dir: &Path) -> Result<LabeledDataset> {
    let pairs = find_idx_pairs(dir)?;
    if pairs.is_empty() {
        return invalid(format!("no IDX image/label pair in {}", dir.display()));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (img_path, lbl_path) in pairs {
        let imgs = parse_idx_images(&read_maybe_gz(&img_path)?)?;
        let lbls = parse_idx_labels(&read_maybe_gz(&lbl_path)?)?;
        if imgs.len() != lbls.len() {
            return invalid(format!(
                "{} has {} images but {} has {} labels",
                img_path.display(),
                imgs.len(),
                lbl_path.display(),
                lbls.len()
            ));
        }
        images.extend(imgs);
        labels.extend(lbls);
    }
    dataset_from_idx(&images, &labels)
}

fn is_supported_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        .unwrap_or(false)
}

/// `<root>/<class_name>/<file>.png|.pgm`, one class per subdirectory, all
/// orderings sorted by name. Undecodable files are skipped with a warning.
pub fn load_directory(root: &Path) -> Result<LabeledDataset> {
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return invalid(format!("{} has no class subdirectories", root.display()));
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    for dir in class_dirs {
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_supported_image(p))
            .collect();
        files.sort();
        let label = class_names.len();
        let mut loaded = 0usize;
        for file in files {
            match load_image_file(&file).and_then(|raw| normalize(&raw, TARGET_SIZE)) {
                Ok(grid) => {
                    images.push(grid);
                    labels.push(label);
                    loaded += 1;
                }
                Err(e) => log::warn!("skipping {}: {e}", file.display()),
            }
        }
        if loaded == 0 {
            return invalid(format!("class '{name}' has no readable images"));
        }
        class_names.push(name);
    }
    LabeledDataset::new(images, labels, class_names)
}

/// An IDX directory if it holds an image/label pair, a class-per-folder
/// corpus otherwise.
pub fn load_any(path: &Path) -> Result<LabeledDataset> {
    if path.is_dir() && !find_idx_pairs(path)?.is_empty() {
        load_idx_dir(path)
    } else {
        load_directory(path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub fold_count: usize,
    /// Fold id per sample.
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Seeded stratified assignment: each class is shuffled and dealt
/// round-robin over the folds, continuing where the previous class stopped
/// so overall fold sizes stay balanced too.
pub fn stratified_folds(labels: &[usize], fold_count: usize, seed: u64) -> Result<FoldPlan> {
    if fold_count < 2 {
        return invalid(format!("fold count {fold_count} must be ≥ 2"));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; labels.len()];
    let mut next = 0usize;
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < fold_count {
            return invalid(format!(
                "class {class} has {} samples, fewer than {fold_count} folds",
                members.len()
            ));
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next % fold_count;
            next += 1;
        }
    }
    Ok(FoldPlan {
        fold_count,
        assignments,
        seed,
    })
}

/// Seeded per-class holdout: from each class, `train_per_class` shuffled
/// samples go to training and the next `test_per_class` to testing. Both
/// index lists are returned in ascending order.
pub fn holdout_split(
    labels: &[usize],
    train_per_class: usize,
    test_per_class: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < train_per_class + test_per_class {
            return invalid(format!(
                "class {class} has {} samples, need {}",
                members.len(),
                train_per_class + test_per_class
            ));
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..train_per_class]);
        test.extend_from_slice(&members[train_per_class..train_per_class + test_per_class]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

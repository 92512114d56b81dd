//! Trained recogniser: training pipeline and the binary model file.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SCCB" | version u32 | D u32 | k u32 | M u32 | tau f64 | rho f64
//! U: D·k f64, column-major
//! per class, until M columns are read: class id u32 | columns u32 | k·columns f64 (column-major)
//! labels: count u32, then per entry: class id u32 | byte length u32 | UTF-8
//! transform: levels u32 | mode u8 | lambda f64 | shrinkage u8 | threshold f64
//! ```

use std::collections::BTreeMap;
use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::concept::{learn_basis, spectral_embedding, CoderConfig, ConceptBasis, FeatureMatrix};
use crate::dataset::LabeledDataset;
use crate::error::{invalid, Error, Result};
use crate::recognizer::{
    build_training_set, recognize_image, ClassCodes, Classification, TrainingSet, TransformConfig,
};
use crate::transform::{CoveringMode, ImageGrid, ShrinkageConfig, ShrinkageMode};

pub const MODEL_MAGIC: &[u8; 4] = b"SCCB";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PipelineConfig {
    pub transform: TransformConfig,
    pub coder: CoderConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub transform: TransformConfig,
    pub rho: f64,
    pub training: TrainingSet,
    /// Display name per class id.
    pub labels: BTreeMap<usize, String>,
}

/// Transform features of every image, one vector per image.
pub fn extract_features(images: &[ImageGrid], config: &TransformConfig) -> Result<Vec<Vec<f64>>> {
    images
        .par_iter()
        .map(|im| crate::recognizer::tetrolet_features(im, config))
        .collect()
}

/// Embedding, basis and per-class codes from precomputed features.
pub fn train_on_features(features: &FeatureMatrix, coder: &CoderConfig) -> Result<TrainingSet> {
    coder.validate()?;
    let embedding = spectral_embedding(features, coder)?;
    let basis = learn_basis(features, &embedding, coder.tau)?;
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in features.labels().iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let per_class = members
        .into_iter()
        .map(|(class, idx)| Ok((class, features.select(&idx)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    build_training_set(&per_class, &basis, coder)
}

pub fn train(dataset: &LabeledDataset, config: &PipelineConfig) -> Result<Model> {
    if dataset.is_empty() {
        return invalid("cannot train on an empty dataset");
    }
    let columns = extract_features(&dataset.images, &config.transform)?;
    let features = FeatureMatrix::from_columns(&columns, dataset.labels.clone())?;
    let training = train_on_features(&features, &config.coder)?;
    let labels = training
        .classes()
        .iter()
        .map(|c| (c.class, dataset.class_names[c.class].clone()))
        .collect();
    Ok(Model {
        transform: config.transform,
        rho: config.coder.rho,
        training,
        labels,
    })
}

impl Model {
    pub fn recognize(&self, image: &ImageGrid) -> Result<Classification> {
        recognize_image(image, &self.training, &self.transform)
    }

    pub fn label(&self, class: usize) -> &str {
        self.labels.get(&class).map(String::as_str).unwrap_or("?")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let basis = self.training.basis();
        let (d, k) = basis.u.shape();
        let mut b = Vec::new();
        b.extend_from_slice(MODEL_MAGIC);
        b.write_u32::<LittleEndian>(MODEL_VERSION).unwrap();
        b.write_u32::<LittleEndian>(d as u32).unwrap();
        b.write_u32::<LittleEndian>(k as u32).unwrap();
        b.write_u32::<LittleEndian>(self.training.total_columns() as u32)
            .unwrap();
        b.write_f64::<LittleEndian>(basis.tau).unwrap();
        b.write_f64::<LittleEndian>(self.rho).unwrap();
        for v in basis.u.iter() {
            b.write_f64::<LittleEndian>(*v).unwrap();
        }
        for class in self.training.classes() {
            b.write_u32::<LittleEndian>(class.class as u32).unwrap();
            b.write_u32::<LittleEndian>(class.codes.ncols() as u32)
                .unwrap();
            for v in class.codes.iter() {
                b.write_f64::<LittleEndian>(*v).unwrap();
            }
        }
        b.write_u32::<LittleEndian>(self.labels.len() as u32)
            .unwrap();
        for (&id, name) in &self.labels {
            b.write_u32::<LittleEndian>(id as u32).unwrap();
            b.write_u32::<LittleEndian>(name.len() as u32).unwrap();
            b.extend_from_slice(name.as_bytes());
        }
        let t = &self.transform;
        b.write_u32::<LittleEndian>(t.levels as u32).unwrap();
        b.write_u8(match t.mode {
            CoveringMode::Strict => 0,
            CoveringMode::Relaxed { .. } => 1,
        })
        .unwrap();
        b.write_f64::<LittleEndian>(t.mode.lambda()).unwrap();
        b.write_u8(match t.shrinkage.mode {
            ShrinkageMode::None => 0,
            ShrinkageMode::PositivePart => 1,
        })
        .unwrap();
        b.write_f64::<LittleEndian>(t.shrinkage.threshold).unwrap();
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ModelReader {
            cur: Cursor::new(bytes),
        };
        let mut magic = [0u8; 4];
        r.exact(&mut magic, "magic")?;
        if &magic != MODEL_MAGIC {
            return r.fail("not a model file (bad magic)");
        }
        let version = r.u32("version")?;
        if version != MODEL_VERSION {
            return r.fail(format!("unsupported model version {version}"));
        }
        let d = r.u32("D")? as usize;
        let k = r.u32("k")? as usize;
        let m = r.u32("M")? as usize;
        let tau = r.f64("tau")?;
        let rho = r.f64("rho")?;
        if d == 0 || k == 0 {
            return r.fail("zero basis dimension");
        }
        let u = DMatrix::from_column_slice(d, k, &r.f64s(d * k, "basis")?);

        let mut classes = Vec::new();
        let mut seen = 0usize;
        while seen < m {
            let id = r.u32("class id")? as usize;
            let cols = r.u32("class column count")? as usize;
            if cols == 0 || seen + cols > m {
                return r.fail(format!(
                    "class {id} column count {cols} inconsistent with M = {m}"
                ));
            }
            let codes = DMatrix::from_column_slice(k, cols, &r.f64s(k * cols, "class codes")?);
            classes.push(ClassCodes::new(id, codes));
            seen += cols;
        }

        let mut labels = BTreeMap::new();
        for _ in 0..r.u32("label count")? {
            let id = r.u32("label class id")? as usize;
            let len = r.u32("label length")? as usize;
            let mut raw = vec![0u8; len];
            r.exact(&mut raw, "label text")?;
            let name = String::from_utf8(raw).map_err(|_| r.error("label is not UTF-8"))?;
            labels.insert(id, name);
        }

        let levels = r.u32("levels")? as usize;
        let mode_code = r.u8("mode")?;
        let lambda = r.f64("lambda")?;
        let mode = match mode_code {
            0 => CoveringMode::Strict,
            1 => CoveringMode::relaxed(lambda)?,
            other => return r.fail(format!("unknown covering mode {other}")),
        };
        let shrink_mode = match r.u8("shrinkage mode")? {
            0 => ShrinkageMode::None,
            1 => ShrinkageMode::PositivePart,
            other => return r.fail(format!("unknown shrinkage mode {other}")),
        };
        let threshold = r.f64("shrinkage threshold")?;
        if (r.cur.position() as usize) != bytes.len() {
            return r.fail("trailing bytes after model");
        }

        let training = TrainingSet::new(classes, ConceptBasis { u, tau })?;
        Ok(Model {
            transform: TransformConfig {
                levels,
                mode,
                shrinkage: ShrinkageConfig {
                    mode: shrink_mode,
                    threshold,
                },
            },
            rho,
            training,
            labels,
        })
    }
}

struct ModelReader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl ModelReader<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.cur.position() as usize,
            message: message.into(),
        }
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(self.error(message))
    }

    fn truncated(&self, what: &str) -> Error {
        self.error(format!("truncated model while reading {what}"))
    }

    fn exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.cur.read_exact(buf).map_err(|_| self.truncated(what))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        self.cur.read_u8().map_err(|_| self.truncated(what))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.cur
            .read_u32::<LittleEndian>()
            .map_err(|_| self.truncated(what))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.cur
            .read_f64::<LittleEndian>()
            .map_err(|_| self.truncated(what))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let remaining = self.cur.get_ref().len() - self.cur.position() as usize;
        if n.checked_mul(8).is_none_or(|b| b > remaining) {
            return Err(self.truncated(what));
        }
        let mut out = vec![0.0; n];
        self.cur
            .read_f64_into::<LittleEndian>(&mut out)
            .map_err(|_| self.truncated(what))?;
        Ok(out)
    }
}

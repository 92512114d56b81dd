//! Nearest-column recognition in concept space.
//!
//! Every class keeps the lasso codes of its training images. A test code is
//! compared with each stored column after both are scaled to unit l1 norm;
//! the class holding the closest column wins.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::concept::{encode_matrix, project_test, CoderConfig, ConceptBasis, FeatureMatrix};
use crate::error::{invalid, Result};
use crate::transform::{forward, shrink, CoveringMode, ImageGrid, ShrinkageConfig};

/// Relevance score: l2 distance between l1-normalised codes.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Score(pub f64);

impl Score {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `v / ‖v‖₁`, or the uniform vector when `v` is all zero.
pub fn l1_normalize(v: &[f64]) -> Vec<f64> {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

fn normalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let normed = l1_normalize(col.as_slice());
        col.copy_from_slice(&normed);
    }
    out
}

/// Minimum distance from an already normalised code to already normalised
/// columns, with the index of the first column attaining it.
fn nearest_column(code: &[f64], columns: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, col) in columns.column_iter().enumerate() {
        let d2: f64 = col.iter().zip(code).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    (best.0, best.1.sqrt())
}

/// `min_j ‖ a/‖a‖₁ − A_j/‖A_j‖₁ ‖₂` over the columns of `class_codes`.
pub fn score(code: &DVector<f64>, class_codes: &DMatrix<f64>) -> Result<Score> {
    if class_codes.nrows() != code.len() {
        return invalid(format!(
            "code dimension {} does not match class dimension {}",
            code.len(),
            class_codes.nrows()
        ));
    }
    if class_codes.ncols() == 0 {
        return invalid("class has no training columns");
    }
    let normed = l1_normalize(code.as_slice());
    Ok(Score(
        nearest_column(&normed, &normalize_columns(class_codes)).1,
    ))
}

/// Training codes of one class plus their l1-normalised copies.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCodes {
    pub class: usize,
    pub codes: DMatrix<f64>,
    normalized: DMatrix<f64>,
}

impl ClassCodes {
    pub fn new(class: usize, codes: DMatrix<f64>) -> Self {
        let normalized = normalize_columns(&codes);
        Self {
            class,
            codes,
            normalized,
        }
    }
}

/// Per-class sparse code dictionaries sharing one concept basis.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    classes: Vec<ClassCodes>,
    basis: ConceptBasis,
}

impl TrainingSet {
    pub fn new(mut classes: Vec<ClassCodes>, basis: ConceptBasis) -> Result<Self> {
        if classes.len() < 2 {
            return invalid(format!("need at least 2 classes, got {}", classes.len()));
        }
        classes.sort_by_key(|c| c.class);
        if classes.windows(2).any(|w| w[0].class == w[1].class) {
            return invalid("duplicate class id in training set");
        }
        for c in &classes {
            if c.codes.ncols() == 0 {
                return invalid(format!("class {} is empty", c.class));
            }
            if c.codes.nrows() != basis.k() {
                return invalid(format!(
                    "class {} codes have dimension {}, basis has k = {}",
                    c.class,
                    c.codes.nrows(),
                    basis.k()
                ));
            }
        }
        Ok(Self { classes, basis })
    }

    pub fn classes(&self) -> &[ClassCodes] {
        &self.classes
    }

    pub fn basis(&self) -> &ConceptBasis {
        &self.basis
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn total_columns(&self) -> usize {
        self.classes.iter().map(|c| c.codes.ncols()).sum()
    }
}

/// Lasso-codes every class's features against `basis`.
pub fn build_training_set(
    per_class: &BTreeMap<usize, FeatureMatrix>,
    basis: &ConceptBasis,
    config: &CoderConfig,
) -> Result<TrainingSet> {
    let mut classes = Vec::with_capacity(per_class.len());
    for (&class, features) in per_class {
        if features.is_empty() {
            return invalid(format!("class {class} has no training samples"));
        }
        let codes = encode_matrix(features, basis, config)?;
        classes.push(ClassCodes::new(class, codes.a));
    }
    TrainingSet::new(classes, basis.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: usize,
    pub score: Score,
    /// `(class id, score)` for every class, ascending id.
    pub per_class: Vec<(usize, Score)>,
}

/// Class with the smallest score; the lowest id wins ties.
pub fn classify(code: &DVector<f64>, training: &TrainingSet) -> Result<Classification> {
    if code.len() != training.basis.k() {
        return invalid(format!(
            "code dimension {} does not match k = {}",
            code.len(),
            training.basis.k()
        ));
    }
    let normed = l1_normalize(code.as_slice());
    let per_class: Vec<(usize, Score)> = training
        .classes
        .iter()
        .map(|c| (c.class, Score(nearest_column(&normed, &c.normalized).1)))
        .collect();
    let (class, score) = per_class
        .iter()
        .copied()
        .fold(None, |best: Option<(usize, Score)>, cur| match best {
            Some(b) if b.1 .0 <= cur.1 .0 => Some(b),
            _ => Some(cur),
        })
        .expect("training set has classes");
    Ok(Classification {
        class,
        score,
        per_class,
    })
}

/// Settings of the feature transform applied before coding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformConfig {
    pub levels: usize,
    pub mode: CoveringMode,
    pub shrinkage: ShrinkageConfig,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            mode: CoveringMode::default(),
            shrinkage: ShrinkageConfig::default(),
        }
    }
}

/// Flattened (optionally shrunk) pyramid of `image`.
pub fn tetrolet_features(image: &ImageGrid, config: &TransformConfig) -> Result<Vec<f64>> {
    let pyramid = forward(image, config.levels, config.mode)?;
    let pyramid = shrink(&pyramid, config.shrinkage)?;
    Ok(pyramid.flatten())
}

/// Transform, project and classify one image.
pub fn recognize_image(
    image: &ImageGrid,
    training: &TrainingSet,
    config: &TransformConfig,
) -> Result<Classification> {
    let features = DVector::from_vec(tetrolet_features(image, config)?);
    let code = project_test(&features, training.basis())?;
    classify(&code, training)
}

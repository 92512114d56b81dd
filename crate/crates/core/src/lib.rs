//! Tetrolet features with sparse concept coding for handwritten character
//! recognition.
//!
//! The pipeline runs, per image: [`transform::forward`] (adaptive Haar on
//! tetromino coverings) → [`transform::TetroletPyramid::flatten`] →
//! [`concept::project_test`] → [`recognizer::classify`]. Training builds
//! the concept basis from a spectral embedding of the training set and keeps
//! lasso codes of every training image as the class dictionaries.

pub mod concept;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod model;
pub mod recognizer;
pub mod tetromino;
pub mod transform;

pub use error::{Error, Result};

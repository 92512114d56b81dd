#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetrolet::dataset::{load_idx_dir, LabeledDataset};
use tetrolet::transform::ImageGrid;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mnist-subset")
}

pub fn mnist_subset() -> LabeledDataset {
    load_idx_dir(&fixture_dir()).expect("bundled MNIST subset loads")
}

pub fn random_images(count: usize, size: usize, seed: u64) -> Vec<ImageGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let px = (0..size * size).map(|_| rng.gen::<f64>()).collect();
            ImageGrid::new(size, px).unwrap()
        })
        .collect()
}

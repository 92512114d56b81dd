mod common;

use std::fs;
use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use proptest::prelude::*;
use tetrolet::dataset::{
    find_idx_pairs, holdout_split, load_any, load_directory, load_idx_dir, normalize,
    parse_idx_images, parse_idx_labels, read_maybe_gz, stratified_folds, write_idx_images,
    write_idx_labels, RawImage, TARGET_SIZE,
};
use tetrolet::Error;

#[test]
fn bundled_subset_is_balanced_mnist() {
    let dir = common::fixture_dir();
    let pairs = find_idx_pairs(&dir).unwrap();
    assert_eq!(pairs.len(), 1);
    let raw = parse_idx_images(&read_maybe_gz(&pairs[0].0).unwrap()).unwrap();
    assert_eq!(raw.len(), 3000);
    assert!(raw.iter().all(|r| r.rows == 28 && r.cols == 28));

    let data = common::mnist_subset();
    assert_eq!(data.len(), 3000);
    assert_eq!(
        data.class_names,
        (0..10).map(|d| d.to_string()).collect::<Vec<_>>()
    );
    for members in data.class_indices() {
        assert_eq!(members.len(), 300);
    }
    for im in &data.images {
        assert_eq!(im.size(), TARGET_SIZE);
        assert!(im.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        // The 2-pixel pad around a 28×28 digit stays blank.
        assert!((0..32).all(|j| im.get(0, j) == 0.0 && im.get(31, j) == 0.0));
    }
}

#[test]
fn idx_errors_carry_offsets() {
    let good = write_idx_images(&[RawImage::from_u8(2, 2, &[1, 2, 3, 4])]).unwrap();
    match parse_idx_images(&good[..18]) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 18),
        other => panic!("{other:?}"),
    }
    match parse_idx_images(&good[..6]) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 4),
        other => panic!("{other:?}"),
    }
    let labels = write_idx_labels(&[1, 2]).unwrap();
    assert!(matches!(
        parse_idx_images(&labels),
        Err(Error::Format { offset: 0, .. })
    ));
    assert!(matches!(
        parse_idx_labels(&good),
        Err(Error::Format { offset: 0, .. })
    ));
}

#[test]
fn gz_and_plain_idx_directories_load_identically() {
    let raw: Vec<RawImage> = (0..6u8)
        .map(|i| RawImage::from_u8(28, 28, &vec![i * 40; 28 * 28]))
        .collect();
    let labels = vec![0, 1, 2, 0, 1, 2];
    let images_bytes = write_idx_images(&raw).unwrap();
    let label_bytes = write_idx_labels(&labels).unwrap();

    let plain = tempfile::tempdir().unwrap();
    fs::write(plain.path().join("toy-images-idx3-ubyte"), &images_bytes).unwrap();
    fs::write(plain.path().join("toy-labels-idx1-ubyte"), &label_bytes).unwrap();

    let zipped = tempfile::tempdir().unwrap();
    for (name, bytes) in [
        ("toy-images-idx3-ubyte.gz", &images_bytes),
        ("toy-labels-idx1-ubyte.gz", &label_bytes),
    ] {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).unwrap();
        fs::write(zipped.path().join(name), enc.finish().unwrap()).unwrap();
    }

    let a = load_idx_dir(plain.path()).unwrap();
    let b = load_any(zipped.path()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.labels, labels);
    assert_eq!(a.images[1].get(2, 2), 40.0 / 255.0);
    assert_eq!(a.images[1].get(1, 1), 0.0);
}

#[test]
fn class_directories_load_sorted() {
    let root = tempfile::tempdir().unwrap();
    for (class, shade) in [("beta", 200u8), ("alpha", 50)] {
        let dir = root.path().join(class);
        fs::create_dir(&dir).unwrap();
        image::GrayImage::from_pixel(32, 32, image::Luma([shade]))
            .save(dir.join("b.png"))
            .unwrap();
        image::GrayImage::from_pixel(20, 12, image::Luma([shade]))
            .save(dir.join("a.pgm"))
            .unwrap();
        fs::write(dir.join("notes.txt"), "ignored").unwrap();
        fs::write(dir.join("broken.png"), "not an image").unwrap();
    }
    let data = load_directory(root.path()).unwrap();
    assert_eq!(data.class_names, vec!["alpha", "beta"]);
    assert_eq!(data.labels, vec![0, 0, 1, 1]);
    for (im, shade) in data.images.iter().zip([50.0, 50.0, 200.0, 200.0]) {
        assert_eq!(im.size(), 32);
        assert!(im
            .pixels()
            .iter()
            .all(|&p| (p - shade / 255.0).abs() < 1e-12));
    }
    assert_eq!(load_any(root.path()).unwrap(), data);

    let empty = tempfile::tempdir().unwrap();
    assert!(load_directory(empty.path()).is_err());
    fs::create_dir(empty.path().join("nothing")).unwrap();
    assert!(load_directory(empty.path()).is_err());
}

#[test]
fn holdout_split_is_disjoint_and_balanced() {
    let data = common::mnist_subset();
    let (train, test) = holdout_split(&data.labels, 200, 100, 0).unwrap();
    assert_eq!(train.len(), 2000);
    assert_eq!(test.len(), 1000);
    assert!(test.iter().all(|i| train.binary_search(i).is_err()));
    for class in 0..10 {
        assert_eq!(
            train.iter().filter(|&&i| data.labels[i] == class).count(),
            200
        );
        assert_eq!(
            test.iter().filter(|&&i| data.labels[i] == class).count(),
            100
        );
    }
    assert_eq!(
        holdout_split(&data.labels, 200, 100, 0).unwrap(),
        (train, test)
    );
    assert!(holdout_split(&data.labels, 250, 100, 0).is_err());
}

#[test]
#[ignore = "needs the full MNIST distribution in MNIST_DIR"]
fn full_mnist_headers() {
    let dir = std::env::var("MNIST_DIR").expect("MNIST_DIR");
    let pairs = find_idx_pairs(std::path::Path::new(&dir)).unwrap();
    let mut counts: Vec<usize> = pairs
        .iter()
        .map(|(img, lbl)| {
            let images = parse_idx_images(&read_maybe_gz(img).unwrap()).unwrap();
            let labels = parse_idx_labels(&read_maybe_gz(lbl).unwrap()).unwrap();
            assert_eq!(images.len(), labels.len());
            assert!(images.iter().all(|r| r.rows == 28 && r.cols == 28));
            images.len()
        })
        .collect();
    counts.sort_unstable();
    assert_eq!(counts, vec![10_000, 60_000]);
}

fn raw_strategy() -> impl Strategy<Value = (usize, usize, Vec<Vec<u8>>)> {
    (1usize..6, 1usize..6, 0usize..5).prop_flat_map(|(r, c, n)| {
        (
            Just(r),
            Just(c),
            prop::collection::vec(prop::collection::vec(any::<u8>(), r * c), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn idx_roundtrip((rows, cols, imgs) in raw_strategy(), labels in prop::collection::vec(0usize..10, 0..20)) {
        let raw: Vec<RawImage> = imgs.iter().map(|px| RawImage::from_u8(rows, cols, px)).collect();
        let bytes = write_idx_images(&raw).unwrap();
        let back = parse_idx_images(&bytes);
        if raw.is_empty() {
            prop_assert!(back.is_err());
        } else {
            prop_assert_eq!(back.unwrap(), raw);
        }
        prop_assert_eq!(parse_idx_labels(&write_idx_labels(&labels).unwrap()).unwrap(), labels);
    }

    #[test]
    fn folds_partition_and_stratify(labels in prop::collection::vec(0usize..4, 20..120), folds in 2usize..6, seed in any::<u64>()) {
        let mut counts = [0usize; 4];
        for &l in &labels {
            counts[l] += 1;
        }
        prop_assume!(counts.iter().all(|&c| c == 0 || c >= folds));
        let plan = stratified_folds(&labels, folds, seed).unwrap();
        prop_assert_eq!(plan.assignments.len(), labels.len());
        let mut seen = vec![false; labels.len()];
        for f in 0..folds {
            let test = plan.test_indices(f);
            let train = plan.train_indices(f);
            prop_assert_eq!(test.len() + train.len(), labels.len());
            for &i in &test {
                prop_assert!(!seen[i]);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        for class in 0..4 {
            let per_fold: Vec<usize> = (0..folds)
                .map(|f| plan.test_indices(f).iter().filter(|&&i| labels[i] == class).count())
                .collect();
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
        prop_assert_eq!(stratified_folds(&labels, folds, seed).unwrap(), plan);
    }

    #[test]
    fn normalisation_bounds(rows in 1usize..40, cols in 1usize..40, seed in any::<u8>()) {
        let px: Vec<u8> = (0..rows * cols).map(|i| (i as u8).wrapping_mul(seed | 1)).collect();
        let grid = normalize(&RawImage::from_u8(rows, cols, &px), TARGET_SIZE).unwrap();
        prop_assert_eq!(grid.size(), TARGET_SIZE);
        prop_assert!(grid.pixels().iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
    }
}

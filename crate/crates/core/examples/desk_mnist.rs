//! Train on 200 images per digit and test on 100 held-out images per digit.
//!
//! cargo run --release -p tetrolet-core --example desk_mnist -- <idx-dir> [k tau rho strict|relaxed lambda]

use std::path::PathBuf;
use std::time::Instant;

use tetrolet::concept::CoderConfig;
use tetrolet::dataset::{holdout_split, load_idx_dir};
use tetrolet::eval::{accuracy, confusion_matrix, micro_accuracy};
use tetrolet::model::{train, PipelineConfig};
use tetrolet::recognizer::TransformConfig;
use tetrolet::transform::CoveringMode;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(
        args.first()
            .map(String::as_str)
            .unwrap_or("crates/core/tests/data/mnist-subset"),
    );
    let defaults = CoderConfig::default();
    let k = args.get(1).map_or(Ok(defaults.k), |s| s.parse())?;
    let tau = args.get(2).map_or(Ok(defaults.tau), |s| s.parse())?;
    let rho = args.get(3).map_or(Ok(defaults.rho), |s| s.parse())?;
    let mode = match args.get(4).map(String::as_str) {
        Some("strict") => CoveringMode::Strict,
        _ => match args.get(5) {
            Some(l) => CoveringMode::relaxed(l.parse()?)?,
            None => CoveringMode::default(),
        },
    };

    let data = load_idx_dir(&dir)?;
    let (train_idx, test_idx) = holdout_split(&data.labels, 200, 100, 0)?;
    let config = PipelineConfig {
        transform: TransformConfig {
            mode,
            ..Default::default()
        },
        coder: CoderConfig {
            k,
            tau,
            rho,
            ..defaults
        },
    };

    let t = Instant::now();
    let model = train(&data.subset(&train_idx), &config)?;
    println!("trained in {:.2?}", t.elapsed());

    let t = Instant::now();
    let mut preds = Vec::new();
    for &i in &test_idx {
        preds.push(model.recognize(&data.images[i])?.class);
    }
    let per_image = t.elapsed().as_secs_f64() * 1e3 / test_idx.len() as f64;
    let truths: Vec<usize> = test_idx.iter().map(|&i| data.labels[i]).collect();
    let cm = confusion_matrix(&preds, &truths, 10)?;
    println!(
        "k={k} tau={tau} rho={rho} mode={mode:?}: macro {:.2}% micro {:.2}% ({per_image:.3} ms/image)",
        accuracy(&cm),
        micro_accuracy(&cm)
    );
    Ok(())
}

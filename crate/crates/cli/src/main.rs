use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tetrolet::concept::CoderConfig;
use tetrolet::dataset::{
    load_any, load_image_file, normalize, parse_idx_images, read_maybe_gz, stratified_folds,
    LabeledDataset, IDX_IMAGES_MAGIC, TARGET_SIZE,
};
use tetrolet::eval::{cross_validate, sweep_csv, sweep_k, SweepOutcome};
use tetrolet::model::{train, Model, PipelineConfig};
use tetrolet::recognizer::TransformConfig;
use tetrolet::tetromino::catalog;
use tetrolet::transform::{
    bits_per_pixel, forward, inverse, side_info_cost, CoveringMode, ImageGrid, TetroletPyramid,
};

#[derive(Parser)]
#[command(
    name = "tetrolet",
    version,
    about = "Tetrolet transform and sparse concept coded digit recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward transform of one image; writes the serialized pyramid.
    Transform {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, value_enum, default_value_t = Mode::Relaxed)]
        mode: Mode,
        #[arg(long, default_value_t = CoveringMode::DEFAULT_LAMBDA)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverse transform of a serialized pyramid to PNG or PGM.
    Reconstruct {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learns a model from an IDX directory or a class-per-folder corpus.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        limit_per_class: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the predicted label and per-class scores of an image or of
    /// every image of an IDX file.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Stratified cross-validation.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        limit_per_class: Option<usize>,
        /// Per-fold CSV; `-` for stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write measured latency into the CSV instead of `NA`.
        #[arg(long)]
        csv_latency: bool,
    },
    /// Cross-validation for each concept dimension.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "64,100,200,300,400")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[arg(long)]
        limit_per_class: Option<usize>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Strict,
    Relaxed,
}

impl Mode {
    fn covering(self, lambda: f64) -> Result<CoveringMode> {
        Ok(match self {
            Mode::Strict => CoveringMode::Strict,
            Mode::Relaxed => CoveringMode::relaxed(lambda)?,
        })
    }
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long, default_value_t = CoderConfig::default().k)]
    k: usize,
    #[arg(long, default_value_t = CoderConfig::default().tau)]
    tau: f64,
    #[arg(long, default_value_t = CoderConfig::default().rho)]
    rho: f64,
    #[arg(long, value_enum, default_value_t = Mode::Relaxed)]
    mode: Mode,
    #[arg(long, default_value_t = CoveringMode::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let config = PipelineConfig {
            transform: TransformConfig {
                levels: self.levels,
                mode: self.mode.covering(self.lambda)?,
                ..Default::default()
            },
            coder: CoderConfig {
                k: self.k,
                tau: self.tau,
                rho: self.rho,
                seed: self.seed,
                ..Default::default()
            },
        };
        config.coder.validate()?;
        Ok(config)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Transform {
            input,
            levels,
            mode,
            lambda,
            out,
        } => run_transform(&input, levels, mode.covering(lambda)?, &out),
        Command::Reconstruct { input, out } => run_reconstruct(&input, &out),
        Command::Train {
            data,
            pipeline,
            limit_per_class,
            out,
        } => run_train(&data, &pipeline, limit_per_class, &out),
        Command::Classify { model, input } => run_classify(&model, &input),
        Command::Evaluate {
            data,
            folds,
            pipeline,
            limit_per_class,
            csv,
            json,
            csv_latency,
        } => {
            let dataset = load_dataset(&data, limit_per_class)?;
            let config = pipeline.config()?;
            let plan = stratified_folds(&dataset.labels, folds, pipeline.seed)?;
            let report = cross_validate(&dataset, &config, &plan)?;
            print!("{}", report.to_table());
            if let Some(path) = csv {
                emit(&path, &report.to_csv(csv_latency))?;
            }
            if let Some(path) = json {
                emit(&path, &report.to_json())?;
            }
            Ok(())
        }
        Command::Sweep {
            data,
            ks,
            folds,
            pipeline,
            limit_per_class,
            csv,
        } => {
            let dataset = load_dataset(&data, limit_per_class)?;
            let config = pipeline.config()?;
            let plan = stratified_folds(&dataset.labels, folds, pipeline.seed)?;
            let rows = sweep_k(&dataset, &ks, &config, &plan)?;
            println!(
                "{:>5} {:>10} {:>10} {:>10} {:>12}",
                "k", "macro %", "micro %", "train s", "latency ms"
            );
            for row in &rows {
                match &row.outcome {
                    SweepOutcome::Completed {
                        accuracy_macro,
                        accuracy_micro,
                        train_seconds,
                        mean_latency_ms,
                    } => println!(
                        "{:>5} {accuracy_macro:>10.3} {accuracy_micro:>10.3} {train_seconds:>10.2} {mean_latency_ms:>12.3}",
                        row.k
                    ),
                    SweepOutcome::Skipped { reason } => println!("{:>5} skipped: {reason}", row.k),
                }
            }
            if let Some(path) = csv {
                emit(&path, &sweep_csv(&rows))?;
            }
            Ok(())
        }
    }
}

fn emit(path: &Path, text: &str) -> Result<()> {
    if path.as_os_str() == "-" {
        print!("{text}");
        Ok(())
    } else {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn load_dataset(path: &Path, limit_per_class: Option<usize>) -> Result<LabeledDataset> {
    let dataset = load_any(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match limit_per_class {
        Some(n) => dataset.limit_per_class(n),
        None => dataset,
    })
}

/// Square power-of-two inputs keep their size; anything else goes onto the
/// recognition grid.
fn load_grid(path: &Path) -> Result<ImageGrid> {
    let raw = load_image_file(path).with_context(|| format!("reading {}", path.display()))?;
    let side = if raw.rows == raw.cols && raw.rows >= 4 && raw.rows.is_power_of_two() {
        raw.rows
    } else {
        TARGET_SIZE
    };
    Ok(normalize(&raw, side)?)
}

fn run_transform(input: &Path, levels: usize, mode: CoveringMode, out: &Path) -> Result<()> {
    let image = load_grid(input)?;
    let pyramid = forward(&image, levels, mode)?;
    fs::write(out, pyramid.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
    let stream = pyramid.covering_stream();
    println!("size            {0}x{0}", image.size());
    println!("levels          {levels}");
    println!("coefficients    {}", pyramid.coefficient_count());
    println!("high-pass zeros {:.4}", pyramid.highpass_sparsity(1e-10));
    println!("covering bits   {:.4} per index", bits_per_pixel(&stream)?);
    println!(
        "side info       {} indices (model {:.0})",
        stream.len(),
        side_info_cost(image.size(), levels)?
    );
    Ok(())
}

fn run_reconstruct(input: &Path, out: &Path) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let pyramid = TetroletPyramid::from_bytes(&bytes)?;
    let image = inverse(&pyramid, catalog())?;
    let n = image.size() as u32;
    let pixels = image
        .pixels()
        .iter()
        .map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buffer = image::GrayImage::from_raw(n, n, pixels).context("image buffer")?;
    buffer
        .save(out)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn run_train(data: &Path, args: &PipelineArgs, limit: Option<usize>, out: &Path) -> Result<()> {
    let dataset = load_dataset(data, limit)?;
    let config = args.config()?;
    let started = Instant::now();
    let model = train(&dataset, &config)?;
    fs::write(out, model.to_bytes()).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "trained on {} images, {} classes, k = {} in {:.2?}",
        dataset.len(),
        model.training.class_count(),
        config.coder.k,
        started.elapsed()
    );
    Ok(())
}

fn is_idx_images(path: &Path) -> Result<bool> {
    let bytes = read_maybe_gz(path)?;
    Ok(bytes.len() >= 4 && bytes[..4] == IDX_IMAGES_MAGIC.to_be_bytes())
}

fn run_classify(model_path: &Path, input: &Path) -> Result<()> {
    let bytes =
        fs::read(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let model = Model::from_bytes(&bytes)?;
    let images = if is_idx_images(input)? {
        parse_idx_images(&read_maybe_gz(input)?)?
            .iter()
            .map(|raw| normalize(raw, TARGET_SIZE))
            .collect::<tetrolet::Result<Vec<_>>>()?
    } else {
        let raw = load_image_file(input).with_context(|| format!("reading {}", input.display()))?;
        vec![normalize(&raw, TARGET_SIZE)?]
    };
    if images.is_empty() {
        bail!("{} holds no images", input.display());
    }
    for (i, image) in images.iter().enumerate() {
        let res = model.recognize(image)?;
        let scores: Vec<String> = res
            .per_class
            .iter()
            .map(|(c, s)| format!("{}:{:.6}", model.label(*c), s.value()))
            .collect();
        println!(
            "{i}\t{}\t{:.6}\t{}",
            model.label(res.class),
            res.score.value(),
            scores.join(" ")
        );
    }
    Ok(())
}

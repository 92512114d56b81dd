//! Recognition metrics, seeded k-fold cross-validation and the concept
//! dimension sweep.

use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::concept::FeatureMatrix;
use crate::dataset::{FoldPlan, LabeledDataset};
use crate::error::{invalid, Error, Result};
use crate::model::{extract_features, train_on_features, PipelineConfig};
use crate::recognizer::recognize_image;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let p = counts.len();
        if counts.iter().any(|r| r.len() != p) {
            return invalid("confusion matrix must be square");
        }
        Ok(Self { counts })
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, k: usize) -> u64 {
        self.counts[k][k]
    }

    pub fn false_negatives(&self, k: usize) -> u64 {
        self.counts[k].iter().sum::<u64>() - self.counts[k][k]
    }

    pub fn false_positives(&self, k: usize) -> u64 {
        self.counts.iter().map(|r| r[k]).sum::<u64>() - self.counts[k][k]
    }

    pub fn add(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_count() != self.class_count() {
            return invalid("confusion matrices differ in class count");
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }
}

pub fn confusion_matrix(
    predictions: &[usize],
    truths: &[usize],
    class_count: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return invalid(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        ));
    }
    let mut counts = vec![vec![0u64; class_count]; class_count];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= class_count || t >= class_count {
            return invalid(format!("label ({t}, {p}) outside 0..{class_count}"));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Recall and precision of one class. An empty denominator yields 0 and
/// clears the matching `*_defined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub recall: f64,
    pub precision: f64,
    pub recall_defined: bool,
    pub precision_defined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, false)
    } else {
        (num as f64 / den as f64, true)
    }
}

pub fn recall_precision(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.class_count())
        .map(|k| {
            let tp = cm.true_positives(k);
            let (recall, recall_defined) = ratio(tp, tp + cm.false_negatives(k));
            let (precision, precision_defined) = ratio(tp, tp + cm.false_positives(k));
            ClassMetrics {
                recall,
                precision,
                recall_defined,
                precision_defined,
            }
        })
        .collect()
}

/// Macro-averaged recall in percent, `100·(1/P)·Σ_k TP_k/(TP_k + FN_k)`.
pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let p = cm.class_count();
    if p == 0 {
        return 0.0;
    }
    let sum: f64 = recall_precision(cm).iter().map(|m| m.recall).sum();
    100.0 * sum / p as f64
}

/// Fraction of correct predictions in percent.
pub fn micro_accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    let correct: u64 = (0..cm.class_count()).map(|k| cm.true_positives(k)).sum();
    100.0 * correct as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy_macro: f64,
    pub accuracy_micro: f64,
    pub train_seconds: f64,
    pub mean_latency_ms: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Free-form description of what was folded.
    pub header: String,
    pub k: usize,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy_macro: f64,
    pub mean_accuracy_micro: f64,
    pub mean_latency_ms: f64,
    pub mean_train_seconds: f64,
    /// Metrics over the pooled confusion matrix of all folds.
    pub per_class: Vec<ClassMetrics>,
    /// Classes whose recall or precision had an empty denominator.
    pub flagged_classes: Vec<usize>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    /// `fold,k,accuracy_macro,accuracy_micro,mean_latency_ms` per fold plus a
    /// `mean` row. Wall-clock latency is written as `NA` unless
    /// `include_latency` is set, which keeps the file reproducible.
    pub fn to_csv(&self, include_latency: bool) -> String {
        let lat = |v: f64| {
            if include_latency {
                format!("{v}")
            } else {
                "NA".to_string()
            }
        };
        let mut out = String::from("fold,k,accuracy_macro,accuracy_micro,mean_latency_ms\n");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                f.fold + 1,
                self.k,
                f.accuracy_macro,
                f.accuracy_micro,
                lat(f.mean_latency_ms)
            );
        }
        let _ = writeln!(
            out,
            "mean,{},{},{},{}",
            self.k,
            self.mean_accuracy_macro,
            self.mean_accuracy_micro,
            lat(self.mean_latency_ms)
        );
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.header);
        let _ = writeln!(
            out,
            "{:>5} {:>7} {:>7} {:>10} {:>10} {:>12}",
            "fold", "train", "test", "macro %", "micro %", "latency ms"
        );
        for f in &self.folds {
            let _ = writeln!(
                out,
                "{:>5} {:>7} {:>7} {:>10.3} {:>10.3} {:>12.3}",
                f.fold + 1,
                f.train_size,
                f.test_size,
                f.accuracy_macro,
                f.accuracy_micro,
                f.mean_latency_ms
            );
        }
        let _ = writeln!(
            out,
            "{:>5} {:>7} {:>7} {:>10.3} {:>10.3} {:>12.3}",
            "mean",
            "",
            "",
            self.mean_accuracy_macro,
            self.mean_accuracy_micro,
            self.mean_latency_ms
        );
        let _ = writeln!(out, "\n{:>12} {:>8} {:>9}", "class", "recall", "precision");
        for (c, m) in self.per_class.iter().enumerate() {
            let flag = if self.flagged_classes.contains(&c) {
                " *"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:>12} {:>8.4} {:>9.4}{flag}",
                self.class_names.get(c).map(String::as_str).unwrap_or("?"),
                m.recall,
                m.precision
            );
        }
        out
    }
}

/// Trains on the out-of-fold samples and evaluates on the in-fold samples
/// of every fold.
pub fn cross_validate(
    dataset: &LabeledDataset,
    config: &PipelineConfig,
    plan: &FoldPlan,
) -> Result<EvalReport> {
    let features = extract_features(&dataset.images, &config.transform)?;
    let all = FeatureMatrix::from_columns(&features, dataset.labels.clone())?;
    cross_validate_features(dataset, &all, config, plan)
}

fn cross_validate_features(
    dataset: &LabeledDataset,
    features: &FeatureMatrix,
    config: &PipelineConfig,
    plan: &FoldPlan,
) -> Result<EvalReport> {
    if plan.assignments.len() != dataset.len() {
        return invalid(format!(
            "fold plan covers {} samples, dataset has {}",
            plan.assignments.len(),
            dataset.len()
        ));
    }
    let classes = dataset.class_count();
    let mut folds = Vec::with_capacity(plan.fold_count);
    let mut pooled = ConfusionMatrix {
        counts: vec![vec![0; classes]; classes],
    };
    for fold in 0..plan.fold_count {
        let wrap = |e: Error| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let train_idx = plan.train_indices(fold);
        let test_idx = plan.test_indices(fold);
        if test_idx.is_empty() || train_idx.is_empty() {
            return Err(wrap(Error::InvalidArgument(
                "empty train or test split".into(),
            )));
        }
        debug_assert!(test_idx.iter().all(|i| train_idx.binary_search(i).is_err()));

        let started = Instant::now();
        let training = features
            .select(&train_idx)
            .and_then(|f| train_on_features(&f, &config.coder))
            .map_err(wrap)?;
        let train_seconds = started.elapsed().as_secs_f64();

        let mut predictions = Vec::with_capacity(test_idx.len());
        let mut latency = 0.0;
        for &i in &test_idx {
            let t = Instant::now();
            let res =
                recognize_image(&dataset.images[i], &training, &config.transform).map_err(wrap)?;
            latency += t.elapsed().as_secs_f64();
            predictions.push(res.class);
        }
        let truths: Vec<usize> = test_idx.iter().map(|&i| dataset.labels[i]).collect();
        let confusion = confusion_matrix(&predictions, &truths, classes)?;
        pooled.add(&confusion)?;
        folds.push(FoldResult {
            fold,
            train_size: train_idx.len(),
            test_size: test_idx.len(),
            accuracy_macro: accuracy(&confusion),
            accuracy_micro: micro_accuracy(&confusion),
            train_seconds,
            mean_latency_ms: 1e3 * latency / test_idx.len() as f64,
            confusion,
        });
        log::info!(
            "fold {}/{}: macro accuracy {:.3}%",
            fold + 1,
            plan.fold_count,
            folds.last().map_or(0.0, |f| f.accuracy_macro)
        );
    }

    let per_class = recall_precision(&pooled);
    let flagged_classes = per_class
        .iter()
        .enumerate()
        .filter(|(_, m)| !(m.recall_defined && m.precision_defined))
        .map(|(c, _)| c)
        .collect();
    Ok(EvalReport {
        header: format!(
            "{}-fold stratified cross-validation over {} samples ({} classes) of the supplied dataset, seed {}",
            plan.fold_count,
            dataset.len(),
            classes,
            plan.seed
        ),
        k: config.coder.k,
        seed: plan.seed,
        class_names: dataset.class_names.clone(),
        mean_accuracy_macro: mean(folds.iter().map(|f| f.accuracy_macro)),
        mean_accuracy_micro: mean(folds.iter().map(|f| f.accuracy_micro)),
        mean_latency_ms: mean(folds.iter().map(|f| f.mean_latency_ms)),
        mean_train_seconds: mean(folds.iter().map(|f| f.train_seconds)),
        folds,
        per_class,
        flagged_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SweepOutcome {
    Completed {
        accuracy_macro: f64,
        accuracy_micro: f64,
        train_seconds: f64,
        mean_latency_ms: f64,
    },
    Skipped {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub outcome: SweepOutcome,
}

/// One cross-validation per `k` over identical folds.
pub fn sweep_k(
    dataset: &LabeledDataset,
    ks: &[usize],
    config: &PipelineConfig,
    plan: &FoldPlan,
) -> Result<Vec<SweepRow>> {
    let features = extract_features(&dataset.images, &config.transform)?;
    let all = FeatureMatrix::from_columns(&features, dataset.labels.clone())?;
    let smallest_train = (0..plan.fold_count)
        .map(|f| plan.train_indices(f).len())
        .min()
        .unwrap_or(0);
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let outcome = if k == 0 || k >= smallest_train {
            SweepOutcome::Skipped {
                reason: format!("k = {k} needs 1 ≤ k < smallest training fold ({smallest_train})"),
            }
        } else {
            let mut cfg = *config;
            cfg.coder.k = k;
            match cross_validate_features(dataset, &all, &cfg, plan) {
                Ok(r) => SweepOutcome::Completed {
                    accuracy_macro: r.mean_accuracy_macro,
                    accuracy_micro: r.mean_accuracy_micro,
                    train_seconds: r.mean_train_seconds,
                    mean_latency_ms: r.mean_latency_ms,
                },
                Err(e @ Error::Fold { .. }) => SweepOutcome::Skipped {
                    reason: e.to_string(),
                },
                Err(e) => return Err(e),
            }
        };
        rows.push(SweepRow { k, outcome });
    }
    Ok(rows)
}

/// `k,status,accuracy_macro,accuracy_micro,train_seconds,mean_latency_ms,reason`
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "k,status,accuracy_macro,accuracy_micro,train_seconds,mean_latency_ms,reason\n",
    );
    for row in rows {
        match &row.outcome {
            SweepOutcome::Completed {
                accuracy_macro,
                accuracy_micro,
                train_seconds,
                mean_latency_ms,
            } => {
                let _ = writeln!(
                    out,
                    "{},completed,{accuracy_macro},{accuracy_micro},{train_seconds},{mean_latency_ms},",
                    row.k
                );
            }
            SweepOutcome::Skipped { reason } => {
                let _ = writeln!(
                    out,
                    "{},skipped,,,,,\"{}\"",
                    row.k,
                    reason.replace('"', "'")
                );
            }
        }
    }
    out
}

//! Precision/recall/accuracy, the three-variant ablation table and
//! one-parameter sweeps over the MDRR pipeline.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{InputShape, ModelVariant};
use crate::error::{Error, Result};
use crate::pipeline::{fit_variant, FeatureSplits, PipelineConfig};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> usize {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, c: usize) -> usize {
        self.counts[c].iter().sum()
    }

    pub fn column_sum(&self, c: usize) -> usize {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

pub fn confusion(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut counts = vec![vec![0; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        for label in [t, p] {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class values with a zero denominator are 0. Macro recall averages the
/// classes that occur in the truth; macro precision the classes that occur
/// in the truth or the predictions.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Dataset("metrics of an empty confusion matrix".into()));
    }
    let c = cm.classes();
    let precision: Vec<f64> = (0..c).map(|k| ratio(cm.counts[k][k], cm.column_sum(k))).collect();
    let recall: Vec<f64> = (0..c).map(|k| ratio(cm.counts[k][k], cm.row_sum(k))).collect();
    let in_truth: Vec<usize> = (0..c).filter(|&k| cm.row_sum(k) > 0).collect();
    let seen: Vec<usize> = (0..c).filter(|&k| cm.row_sum(k) + cm.column_sum(k) > 0).collect();
    let macro_recall = in_truth.iter().map(|&k| recall[k]).sum::<f64>() / in_truth.len() as f64;
    let macro_precision = seen.iter().map(|&k| precision[k]).sum::<f64>() / seen.len() as f64;
    Ok(MetricsReport {
        macro_precision,
        macro_recall,
        accuracy: ratio(cm.trace(), total),
        precision,
        recall,
        confusion: cm.clone(),
    })
}

pub fn write_metrics_csv(report: &MetricsReport, labels: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["class", "precision", "recall"])?;
    for (k, label) in labels.iter().enumerate() {
        w.write_record([
            label.clone(),
            report.precision[k].to_string(),
            report.recall[k].to_string(),
        ])?;
    }
    w.write_record([
        "macro".to_string(),
        report.macro_precision.to_string(),
        report.macro_recall.to_string(),
    ])?;
    w.write_record(["accuracy".to_string(), report.accuracy.to_string(), String::new()])?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: ModelVariant,
    pub dataset: String,
    /// Test-split metrics, or the training failure rendered as text.
    pub outcome: std::result::Result<MetricsReport, String>,
}

/// Trains MD, MDR and MDRR on the same splits with the same seed and scores
/// each on the test split. A failing variant does not stop the others.
pub fn run_ablation(data: &FeatureSplits, config: &PipelineConfig, dataset: &str) -> Vec<AblationRow> {
    ModelVariant::ALL
        .iter()
        .map(|&variant| {
            let outcome = fit_variant(variant, data, config)
                .and_then(|p| p.evaluate(&data.test))
                .map(|e| e.report)
                .map_err(|e| {
                    log::error!("{variant} failed: {e}");
                    e.to_string()
                });
            AblationRow {
                variant,
                dataset: dataset.to_string(),
                outcome,
            }
        })
        .collect()
}

/// Failed variants are written with NaN metrics so every table keeps three rows.
pub fn write_ablation_csv(rows: &[AblationRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "dataset", "precision", "recall", "accuracy"])?;
    for r in rows {
        let (p, rc, a) = match &r.outcome {
            Ok(m) => (m.macro_precision, m.macro_recall, m.accuracy),
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        };
        w.write_record([
            r.variant.to_string(),
            r.dataset.clone(),
            p.to_string(),
            rc.to_string(),
            a.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SliceLen,
    MaxDim,
    ReducedDim,
    AutoencoderHidden,
    InputShape,
    /// Bi-LSTM hidden size H.
    Hidden,
    BatchSize,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParameter::SliceLen => "slice_len",
            SweepParameter::MaxDim => "max_dim",
            SweepParameter::ReducedDim => "reduced_dim",
            SweepParameter::AutoencoderHidden => "autoencoder_hidden",
            SweepParameter::InputShape => "input_shape",
            SweepParameter::Hidden => "hidden",
            SweepParameter::BatchSize => "batch_size",
        })
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::config("sweep.parameter", format!("unknown sweep parameter {s:?}")))
    }
}

/// One point on a sweep axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Size(usize),
    List(Vec<usize>),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Size(n) => write!(f, "{n}"),
            SweepValue::List(v) => {
                let parts: Vec<String> = v.iter().map(usize::to_string).collect();
                write!(f, "{}", parts.join("x"))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values", "at least one value is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("sweep.seeds", "at least one seed is required"));
        }
        for v in &self.values {
            let ok = match (self.parameter, v) {
                (SweepParameter::AutoencoderHidden, SweepValue::List(l)) => !l.contains(&0),
                (SweepParameter::InputShape, SweepValue::List(l)) => l.len() == 2 && !l.contains(&0),
                (SweepParameter::AutoencoderHidden | SweepParameter::InputShape, _) => false,
                (_, SweepValue::Size(n)) => *n > 0,
                (_, SweepValue::List(_)) => false,
            };
            if !ok {
                return Err(Error::config(
                    "sweep.values",
                    format!("{v} is not a valid {} value", self.parameter),
                ));
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = crate::ingest::read_json(path.as_ref())?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Applies one sweep value to a base configuration. `Err` carries the reason
/// the combination is skipped.
pub fn apply_sweep_value(
    base: &PipelineConfig,
    parameter: SweepParameter,
    value: &SweepValue,
) -> std::result::Result<PipelineConfig, String> {
    let mut c = base.clone();
    match (parameter, value) {
        (SweepParameter::SliceLen, SweepValue::Size(n)) => c.rearrange.slice_len = *n,
        (SweepParameter::MaxDim, SweepValue::Size(n)) => {
            c.rearrange.max_dim = *n;
            c.reduce.input_dim = *n;
            if *n % c.shapes.mdr.steps == 0 {
                c.shapes.mdr.features = n / c.shapes.mdr.steps;
            }
        }
        (SweepParameter::ReducedDim, SweepValue::Size(n)) => {
            let t = c.classifier.input_shape.steps;
            if n % t != 0 {
                return Err(format!("reduced_dim {n} is not divisible by T = {t}"));
            }
            c.reduce.reduced_dim = *n;
            c.classifier.input_shape = InputShape::new(t, n / t);
        }
        (SweepParameter::AutoencoderHidden, SweepValue::List(l)) => c.reduce.hidden_sizes = l.clone(),
        (SweepParameter::Hidden, SweepValue::Size(n)) => c.classifier.hidden = *n,
        (SweepParameter::BatchSize, SweepValue::Size(n)) => c.classifier.batch_size = *n,
        (SweepParameter::InputShape, SweepValue::List(l)) if l.len() == 2 => {
            let shape = InputShape::new(l[0], l[1]);
            if shape.len() != c.reduce.reduced_dim {
                return Err(format!(
                    "T·F = {} differs from reduced_dim {}",
                    shape.len(),
                    c.reduce.reduced_dim
                ));
            }
            c.classifier.input_shape = shape;
        }
        (p, v) => return Err(format!("{v} is not a {p} value")),
    }
    // Only MDRR is trained, so the MDR shape is not held to max_dim here.
    let mut check = c.clone();
    check.shapes.mdr = InputShape::new(1, check.rearrange.max_dim);
    check.validate().map_err(|e| e.to_string())?;
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: String,
    pub seed: u64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// `(value, seed, reason)` for every cell that was not run.
    pub skipped: Vec<(String, u64, String)>,
}

/// Retrains MDRR for every (value, seed) cell and scores it on the test
/// split. Cells run in parallel; results keep spec order.
pub fn run_sweep(spec: &SweepSpec, data: &FeatureSplits, base: &PipelineConfig) -> Result<SweepOutcome> {
    spec.validate()?;
    let cells: Vec<(&SweepValue, u64)> = spec
        .values
        .iter()
        .flat_map(|v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let results: Vec<std::result::Result<SweepRow, String>> = cells
        .par_iter()
        .map(|&(value, seed)| {
            let cfg = apply_sweep_value(base, spec.parameter, value)?.with_seed(seed);
            let fitted = fit_variant(ModelVariant::MDRR, data, &cfg).map_err(|e| e.to_string())?;
            let m = fitted.evaluate(&data.test).map_err(|e| e.to_string())?.report;
            Ok(SweepRow {
                parameter: spec.parameter.to_string(),
                value: value.to_string(),
                seed,
                precision: m.macro_precision,
                recall: m.macro_recall,
                accuracy: m.accuracy,
            })
        })
        .collect();
    let mut out = SweepOutcome::default();
    for ((value, seed), r) in cells.into_iter().zip(results) {
        match r {
            Ok(row) => out.rows.push(row),
            Err(reason) => {
                log::warn!("sweep {}={value} seed {seed} skipped: {reason}", spec.parameter);
                out.skipped.push((value.to_string(), seed, reason));
            }
        }
    }
    Ok(out)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["parameter", "value", "seed", "precision", "recall", "accuracy"])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

//! Variant-specific input preparation and the Bi-LSTM attention training
//! loop (reduce-on-plateau learning rate, early stopping, best-checkpoint
//! return).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::mfcc::FeatureMatrix;
use crate::nn::{BiLstmAttentionModel, Optimizer, OptimizerKind, Parameters};
use crate::rearrange::CappedVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Raw MFCC frames.
    MD,
    /// Rearranged and capped MFCC.
    MDR,
    /// Rearranged, capped and autoencoder-reduced MFCC.
    MDRR,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [ModelVariant::MD, ModelVariant::MDR, ModelVariant::MDRR];
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelVariant::MD => "MD",
            ModelVariant::MDR => "MDR",
            ModelVariant::MDRR => "MDRR",
        })
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MD" => Ok(ModelVariant::MD),
            "MDR" => Ok(ModelVariant::MDR),
            "MDRR" => Ok(ModelVariant::MDRR),
            _ => Err(Error::config(
                "variant",
                format!("unknown variant {s:?}, expected MD, MDR or MDRR"),
            )),
        }
    }
}

/// Classifier input geometry: `steps` vectors of `features` values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct InputShape {
    pub steps: usize,
    pub features: usize,
}

impl InputShape {
    pub fn new(steps: usize, features: usize) -> Self {
        Self { steps, features }
    }

    pub fn len(&self) -> usize {
        self.steps * self.features
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<[usize; 2]> for InputShape {
    fn from([steps, features]: [usize; 2]) -> Self {
        Self { steps, features }
    }
}

impl From<InputShape> for [usize; 2] {
    fn from(s: InputShape) -> Self {
        [s.steps, s.features]
    }
}

impl fmt::Display for InputShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.steps, self.features)
    }
}

impl FromStr for InputShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['x', 'X', ',']).map(str::trim).collect();
        match parts.as_slice() {
            [t, f] => match (t.parse(), f.parse()) {
                (Ok(t), Ok(f)) => Ok(Self::new(t, f)),
                _ => Err(Error::config("input_shape", format!("cannot parse {s:?}"))),
            },
            _ => Err(Error::config("input_shape", format!("expected TxF, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub input_shape: InputShape,
    pub hidden: usize,
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub plateau_patience: usize,
    pub decay_factor: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_shape: InputShape::new(20, 10),
            hidden: 64,
            classes: 2,
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            plateau_patience: 3,
            decay_factor: 0.5,
            early_stop_patience: 10,
            seed: 0,
            optimizer: OptimizerKind::adam(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_shape.steps == 0 || self.input_shape.features == 0 {
            return Err(Error::config("classifier.input_shape", "T and F must be ≥ 1"));
        }
        if self.hidden == 0 {
            return Err(Error::config("classifier.hidden", "must be ≥ 1"));
        }
        if self.classes < 2 {
            return Err(Error::config("classifier.classes", "training needs at least 2 classes"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("classifier.batch_size", "must be ≥ 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("classifier.learning_rate", "must be finite and ≥ 0"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::config("classifier.decay_factor", "must lie in (0, 1]"));
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return Err(Error::config("classifier.patience", "patience values must be ≥ 1"));
        }
        Ok(())
    }
}

/// Per-clip output of the stage preceding the classifier.
#[derive(Clone, Copy, Debug)]
pub enum StageOutput<'a> {
    Mfcc(&'a FeatureMatrix),
    Capped(&'a CappedVector),
    Code(&'a [f64]),
}

/// Reshapes row-major into `steps × features`.
pub fn reshape_vector(v: &[f64], shape: InputShape) -> Result<Matrix> {
    if v.len() != shape.len() {
        return Err(Error::Shape(format!(
            "input shape {shape} needs {} elements, vector has {}",
            shape.len(),
            v.len()
        )));
    }
    Ok(Matrix::from_vec(shape.steps, shape.features, v.to_vec()))
}

/// MFCC frames as a sequence: frame t becomes step t, truncated or
/// zero-padded to `shape.steps`.
pub fn mfcc_sequence(m: &FeatureMatrix, shape: InputShape) -> Result<Matrix> {
    if shape.features != m.coefficients() {
        return Err(Error::Shape(format!(
            "MD input needs F = D = {}, got F = {}",
            m.coefficients(),
            shape.features
        )));
    }
    Ok(Matrix::from_fn(shape.steps, shape.features, |t, d| {
        if t < m.frames() {
            m.get(d, t)
        } else {
            0.0
        }
    }))
}

pub fn prepare_input(variant: ModelVariant, stage: StageOutput<'_>, shape: InputShape) -> Result<Matrix> {
    match (variant, stage) {
        (ModelVariant::MD, StageOutput::Mfcc(m)) => mfcc_sequence(m, shape),
        (ModelVariant::MDR, StageOutput::Capped(v)) => reshape_vector(&v.values, shape),
        (ModelVariant::MDRR, StageOutput::Code(z)) => reshape_vector(z, shape),
        (v, s) => Err(Error::Shape(format!("{v} cannot consume stage output {s:?}"))),
    }
}

/// A prepared sequence and its class index.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: Matrix,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "val_loss", "val_acc", "lr"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.val_acc.to_string(),
                e.lr.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "epoch,train_loss,val_loss,val_acc,lr").expect("vec write");
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.epoch, e.train_loss, e.val_loss, e.val_acc, e.lr
            )
            .expect("vec write");
        }
        String::from_utf8(out).expect("ascii")
    }
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub model: BiLstmAttentionModel,
    pub log: TrainingLog,
    /// Epoch whose parameters were kept (lowest validation loss).
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Argmax with ties going to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn forward_classify(model: &BiLstmAttentionModel, input: &Matrix) -> Result<Vec<f64>> {
    model.probabilities(input)
}

pub fn predict(model: &BiLstmAttentionModel, input: &Matrix) -> Result<usize> {
    forward_classify(model, input).map(|p| argmax(&p))
}

pub fn predict_all(model: &BiLstmAttentionModel, inputs: &[Matrix]) -> Result<Vec<usize>> {
    inputs.par_iter().map(|x| predict(model, x)).collect()
}

/// Mean cross-entropy and accuracy.
pub fn evaluate(model: &BiLstmAttentionModel, data: &[Example]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty split".into()));
    }
    let scored = data
        .par_iter()
        .map(|ex| {
            let t = model.forward(&ex.input)?;
            let (loss, _) = crate::nn::softmax_cross_entropy(&t.logits, ex.label)?;
            Ok((loss, argmax(&t.probabilities) == ex.label))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = data.len() as f64;
    let loss = scored.iter().map(|s| s.0).sum::<f64>() / n;
    let acc = scored.iter().filter(|s| s.1).count() as f64 / n;
    Ok((loss, acc))
}

fn check_examples(data: &[Example], config: &ClassifierConfig, split: &str) -> Result<()> {
    if data.is_empty() {
        return Err(Error::Dataset(format!("{split} split is empty")));
    }
    for (i, ex) in data.iter().enumerate() {
        if ex.input.shape() != (config.input_shape.steps, config.input_shape.features) {
            return Err(Error::Shape(format!(
                "{split} example {i} is {}x{}, config says {}",
                ex.input.rows(),
                ex.input.cols(),
                config.input_shape
            )));
        }
        if ex.label >= config.classes {
            return Err(Error::LabelOutOfRange {
                label: ex.label,
                classes: config.classes,
            });
        }
    }
    Ok(())
}

pub fn train(train_set: &[Example], val_set: &[Example], config: &ClassifierConfig) -> Result<TrainedClassifier> {
    config.validate()?;
    check_examples(train_set, config, "training")?;
    check_examples(val_set, config, "validation")?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = BiLstmAttentionModel::init(&mut rng, config.input_shape.features, config.hidden, config.classes);
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut lr = config.learning_rate;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best: Option<(f64, usize, BiLstmAttentionModel)> = None;
    let mut plateau = 0;
    let mut stale = 0;
    let mut log = TrainingLog::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| model.loss_and_gradients(&train_set[i].input, train_set[i].label))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = BiLstmAttentionModel::zeros(model.features(), model.hidden(), model.classes());
            let scale = 1.0 / batch.len() as f64;
            for (loss, g) in &results {
                loss_sum += loss;
                grads.add_scaled(g, scale);
            }
            optimizer.step(&mut model, &grads, lr).map_err(|e| match e {
                Error::NonFiniteGradient { .. } => Error::Divergence { epoch, loss: f64::NAN },
                other => other,
            })?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_acc) = evaluate(&model, val_set)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5} acc {val_acc:.3} lr {lr:e}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            lr,
        });

        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, model.clone()));
            plateau = 0;
            stale = 0;
        } else {
            plateau += 1;
            stale += 1;
            if plateau >= config.plateau_patience {
                lr *= config.decay_factor;
                plateau = 0;
            }
            if stale >= config.early_stop_patience {
                break;
            }
        }
    }

    let (best_val_loss, best_epoch, model) = match best {
        Some(b) => b,
        None => {
            // zero epochs: report the initial model
            let (val_loss, _) = evaluate(&model, val_set)?;
            (val_loss, 0, model)
        }
    };
    Ok(TrainedClassifier {
        model,
        log,
        best_epoch,
        best_val_loss,
    })
}

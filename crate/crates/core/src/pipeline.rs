//! End-to-end wiring of the three variants: MFCC features in, fitted
//! front-end stages plus a trained classifier out, with checkpointing.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{
    self, prepare_input, ClassifierConfig, Example, InputShape, ModelVariant, StageOutput, TrainingLog,
};
use crate::container::{Container, Tensor};
use crate::error::{Error, Result};
use crate::eval::{confusion, metrics, MetricsReport};
use crate::ingest::{load_wav, AudioClip, ManifestEntry, SplitAssignment};
use crate::linalg::Matrix;
use crate::mfcc::{extract_mfcc, FeatureMatrix, MfccSettings};
use crate::nn::{BiLstmAttentionModel, Parameters};
use crate::rearrange::{rearrange_pipeline, RearrangeConfig};
use crate::reduce::{init_autoencoder, train_autoencoder, AutoencoderConfig, AutoencoderParams, Standardizer};

pub const CHECKPOINT_FORMAT: &str = "mdrr-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Sequence geometry for the two variants whose shape is not tied to the
/// autoencoder code (MDRR uses `classifier.input_shape`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantShapes {
    pub md: InputShape,
    pub mdr: InputShape,
}

impl Default for VariantShapes {
    fn default() -> Self {
        Self {
            md: InputShape::new(105, 20),
            mdr: InputShape::new(20, 105),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub mfcc: MfccSettings,
    pub rearrange: RearrangeConfig,
    pub reduce: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub shapes: VariantShapes,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.mfcc.validate()?;
        self.rearrange.validate()?;
        self.reduce.validate()?;
        let mut clf = self.classifier.clone();
        clf.classes = clf.classes.max(2);
        clf.validate()?;
        if self.reduce.input_dim != self.rearrange.max_dim {
            return Err(Error::config(
                "reduce.input_dim",
                format!(
                    "{} must equal rearrange.max_dim {}",
                    self.reduce.input_dim, self.rearrange.max_dim
                ),
            ));
        }
        if self.classifier.input_shape.len() != self.reduce.reduced_dim {
            return Err(Error::config(
                "classifier.input_shape",
                format!(
                    "{} holds {} values but reduce.reduced_dim is {}",
                    self.classifier.input_shape,
                    self.classifier.input_shape.len(),
                    self.reduce.reduced_dim
                ),
            ));
        }
        if self.shapes.mdr.len() != self.rearrange.max_dim {
            return Err(Error::config(
                "shapes.mdr",
                format!(
                    "{} does not hold max_dim = {} values",
                    self.shapes.mdr, self.rearrange.max_dim
                ),
            ));
        }
        if self.shapes.md.features != self.mfcc.coefficients {
            return Err(Error::config(
                "shapes.md",
                format!("F must equal mfcc.coefficients = {}", self.mfcc.coefficients),
            ));
        }
        for (field, s) in [("shapes.md", self.shapes.md), ("shapes.mdr", self.shapes.mdr)] {
            if s.is_empty() {
                return Err(Error::config(field, "T and F must be ≥ 1"));
            }
        }
        Ok(())
    }

    /// Routes one seed to every stochastic stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.reduce.seed = seed;
        self.classifier.seed = seed;
        self
    }

    pub fn input_shape(&self, variant: ModelVariant) -> InputShape {
        match variant {
            ModelVariant::MD => self.shapes.md,
            ModelVariant::MDR => self.shapes.mdr,
            ModelVariant::MDRR => self.classifier.input_shape,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LabeledFeatures {
    pub id: String,
    pub label: usize,
    pub features: FeatureMatrix,
}

/// MFCC features of the three splits with a shared label index.
#[derive(Clone, Debug, Default)]
pub struct FeatureSplits {
    pub labels: Vec<String>,
    pub train: Vec<LabeledFeatures>,
    pub val: Vec<LabeledFeatures>,
    pub test: Vec<LabeledFeatures>,
}

impl FeatureSplits {
    pub fn classes(&self) -> usize {
        self.labels.len()
    }
}

pub fn label_index(labels: &[String], label: &str) -> Result<usize> {
    labels
        .binary_search_by(|l| l.as_str().cmp(label))
        .map_err(|_| Error::Dataset(format!("label {label:?} is not among the training classes")))
}

pub fn extract_entries(
    entries: &[ManifestEntry],
    settings: &MfccSettings,
    labels: &[String],
) -> Result<Vec<LabeledFeatures>> {
    entries
        .par_iter()
        .map(|e| {
            let clip = load_wav(&e.path)?;
            let cfg = settings.resolve(clip.sample_rate)?;
            Ok(LabeledFeatures {
                label: label_index(labels, &e.label)?,
                features: extract_mfcc(&clip, &cfg)?,
                id: clip.id,
            })
        })
        .collect()
}

/// Featurizes clips already in memory.
pub fn featurize_clips(
    clips: &[AudioClip],
    settings: &MfccSettings,
    labels: &[String],
) -> Result<Vec<LabeledFeatures>> {
    clips
        .par_iter()
        .map(|c| {
            let cfg = settings.resolve(c.sample_rate)?;
            Ok(LabeledFeatures {
                id: c.id.clone(),
                label: label_index(labels, &c.label)?,
                features: extract_mfcc(c, &cfg)?,
            })
        })
        .collect()
}

/// Loads and featurizes every clip of a split assignment. Labels are the
/// sorted class names of the training split.
pub fn extract_splits(assignment: &SplitAssignment, settings: &MfccSettings) -> Result<FeatureSplits> {
    let labels: Vec<String> = assignment
        .train
        .iter()
        .map(|e| e.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    Ok(FeatureSplits {
        train: extract_entries(&assignment.train, settings, &labels)?,
        val: extract_entries(&assignment.val, settings, &labels)?,
        test: extract_entries(&assignment.test, settings, &labels)?,
        labels,
    })
}

fn standardize_rows(norm: &Standardizer, m: &Matrix) -> Result<Matrix> {
    let mut out = Vec::with_capacity(m.rows() * m.cols());
    for r in 0..m.rows() {
        out.extend(norm.apply(m.row(r))?);
    }
    Ok(Matrix::from_vec(m.rows(), m.cols(), out))
}

/// Everything between an MFCC matrix and the classifier input.
#[derive(Clone, Debug)]
pub struct FrontEnd {
    pub variant: ModelVariant,
    pub rearrange: RearrangeConfig,
    pub shape: InputShape,
    /// Autoencoder and the per-element standardizer applied before it (MDRR).
    pub autoencoder: Option<(AutoencoderParams, Standardizer)>,
    /// Per-feature standardizer over sequence steps, fitted on training data.
    pub input_norm: Option<Standardizer>,
}

impl FrontEnd {
    fn raw_sequence(&self, m: &FeatureMatrix) -> Result<Matrix> {
        match self.variant {
            ModelVariant::MD => prepare_input(self.variant, StageOutput::Mfcc(m), self.shape),
            ModelVariant::MDR => {
                let capped = rearrange_pipeline(m, &self.rearrange)?;
                prepare_input(self.variant, StageOutput::Capped(&capped), self.shape)
            }
            ModelVariant::MDRR => {
                let (ae, norm) = self.autoencoder.as_ref().ok_or(Error::Untrained)?;
                let capped = rearrange_pipeline(m, &self.rearrange)?;
                let code = crate::reduce::encode(ae, &norm.apply(&capped.values)?)?;
                prepare_input(self.variant, StageOutput::Code(&code), self.shape)
            }
        }
    }

    pub fn prepare(&self, m: &FeatureMatrix) -> Result<Matrix> {
        let seq = self.raw_sequence(m)?;
        match &self.input_norm {
            Some(norm) => standardize_rows(norm, &seq),
            None => Ok(seq),
        }
    }

    pub fn prepare_all(&self, clips: &[LabeledFeatures]) -> Result<Vec<Example>> {
        clips
            .par_iter()
            .map(|c| {
                Ok(Example {
                    input: self.prepare(&c.features)?,
                    label: c.label,
                })
            })
            .collect()
    }

    /// Fits the autoencoder (MDRR only) and the input standardizer.
    pub fn fit(variant: ModelVariant, train: &[LabeledFeatures], config: &PipelineConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Dataset("training split is empty".into()));
        }
        let mut fe = FrontEnd {
            variant,
            rearrange: config.rearrange.clone(),
            shape: config.input_shape(variant),
            autoencoder: None,
            input_norm: None,
        };
        if variant == ModelVariant::MDRR {
            let capped = train
                .par_iter()
                .map(|c| rearrange_pipeline(&c.features, &config.rearrange).map(|v| v.values))
                .collect::<Result<Vec<_>>>()?;
            let norm = Standardizer::fit(&capped)?;
            let scaled = capped.iter().map(|v| norm.apply(v)).collect::<Result<Vec<_>>>()?;
            let trained = train_autoencoder(&scaled, &config.reduce)?;
            log::info!(
                "autoencoder reconstruction loss {:.5} after {} epochs",
                trained.loss_history.last().copied().unwrap_or(f64::NAN),
                trained.loss_history.len()
            );
            fe.autoencoder = Some((trained.params, norm));
        }
        let seqs = train
            .par_iter()
            .map(|c| fe.raw_sequence(&c.features))
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = seqs
            .iter()
            .flat_map(|s| (0..s.rows()).map(move |r| s.row(r).to_vec()))
            .collect();
        fe.input_norm = Some(Standardizer::fit(&rows)?);
        Ok(fe)
    }
}

#[derive(Clone, Debug)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub labels: Vec<String>,
    pub front: FrontEnd,
    pub model: BiLstmAttentionModel,
    pub best_epoch: usize,
    pub trained: bool,
    pub log: TrainingLog,
}

/// Result of scoring a labeled split.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub truth: Vec<usize>,
    pub predicted: Vec<usize>,
    pub report: MetricsReport,
}

pub fn fit_variant(variant: ModelVariant, data: &FeatureSplits, config: &PipelineConfig) -> Result<FittedPipeline> {
    config.validate()?;
    if data.classes() < 2 {
        return Err(Error::config(
            "classifier.classes",
            format!("training needs at least 2 classes, dataset has {}", data.classes()),
        ));
    }
    let front = FrontEnd::fit(variant, &data.train, config)?;
    let train = front.prepare_all(&data.train)?;
    let val = front.prepare_all(&data.val)?;
    let mut clf = config.classifier.clone();
    clf.classes = data.classes();
    clf.input_shape = front.shape;
    let trained = classifier::train(&train, &val, &clf)?;
    log::info!(
        "{variant}: best epoch {} (val loss {:.5}) of {}",
        trained.best_epoch,
        trained.best_val_loss,
        trained.log.epochs.len()
    );
    Ok(FittedPipeline {
        config: config.clone(),
        labels: data.labels.clone(),
        front,
        model: trained.model,
        best_epoch: trained.best_epoch,
        trained: !trained.log.epochs.is_empty(),
        log: trained.log,
    })
}

impl FittedPipeline {
    pub fn variant(&self) -> ModelVariant {
        self.front.variant
    }

    pub fn predict(&self, m: &FeatureMatrix) -> Result<usize> {
        classifier::predict(&self.model, &self.front.prepare(m)?)
    }

    pub fn evaluate(&self, clips: &[LabeledFeatures]) -> Result<Evaluation> {
        let examples = self.front.prepare_all(clips)?;
        let predicted = examples
            .par_iter()
            .map(|e| classifier::predict(&self.model, &e.input))
            .collect::<Result<Vec<_>>>()?;
        let truth: Vec<usize> = examples.iter().map(|e| e.label).collect();
        let report = metrics(&confusion(&truth, &predicted, self.labels.len())?)?;
        Ok(Evaluation {
            truth,
            predicted,
            report,
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(serde_json::json!({
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model_variant": self.variant(),
            "config": self.config,
            "labels": self.labels,
            "epoch": self.best_epoch,
            "trained": self.trained,
            "input_shape": self.front.shape,
            "hidden": self.model.hidden(),
        }));
        self.model.write_into("clf.", &mut c);
        if let Some((ae, norm)) = &self.front.autoencoder {
            ae.write_into("ae.", &mut c);
            push_standardizer(&mut c, "ae_norm", norm);
        }
        if let Some(norm) = &self.front.input_norm {
            push_standardizer(&mut c, "input_norm", norm);
        }
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn from_container(c: &Container, origin: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            format: String,
            version: u32,
            model_variant: ModelVariant,
            config: PipelineConfig,
            labels: Vec<String>,
            epoch: usize,
            trained: bool,
            input_shape: InputShape,
            hidden: usize,
        }
        let meta: Meta = serde_json::from_value(c.meta.clone())?;
        if meta.format != CHECKPOINT_FORMAT || meta.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                origin,
                format!(
                    "not a version {CHECKPOINT_VERSION} checkpoint ({} v{})",
                    meta.format, meta.version
                ),
            ));
        }
        let mut model = BiLstmAttentionModel::zeros(meta.input_shape.features, meta.hidden, meta.labels.len());
        model.read_from("clf.", c)?;
        let autoencoder = if meta.model_variant == ModelVariant::MDRR {
            let mut ae = init_autoencoder(&meta.config.reduce, 0)?;
            ae.read_from("ae.", c)?;
            Some((ae, read_standardizer(c, "ae_norm")?))
        } else {
            None
        };
        let input_norm = match c.get("input_norm.mean") {
            Some(_) => Some(read_standardizer(c, "input_norm")?),
            None => None,
        };
        Ok(Self {
            front: FrontEnd {
                variant: meta.model_variant,
                rearrange: meta.config.rearrange.clone(),
                shape: meta.input_shape,
                autoencoder,
                input_norm,
            },
            config: meta.config,
            labels: meta.labels,
            model,
            best_epoch: meta.epoch,
            trained: meta.trained,
            log: TrainingLog::default(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_container(&Container::read(path)?, path)
    }
}

fn push_standardizer(c: &mut Container, prefix: &str, s: &Standardizer) {
    c.push(Tensor::new(format!("{prefix}.mean"), vec![s.dim()], s.mean.clone()));
    c.push(Tensor::new(format!("{prefix}.scale"), vec![s.dim()], s.scale.clone()));
}

fn read_standardizer(c: &Container, prefix: &str) -> Result<Standardizer> {
    let mean = c.require(&format!("{prefix}.mean"))?.data.clone();
    let scale = c.require(&format!("{prefix}.scale"))?.data.clone();
    if mean.len() != scale.len() {
        return Err(Error::Shape(format!("{prefix}: mean and scale lengths differ")));
    }
    Ok(Standardizer { mean, scale })
}

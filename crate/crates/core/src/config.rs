//! Whole-run configuration: one JSON document with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierConfig;
use crate::error::{Error, Result};
use crate::ingest::{read_json, validate_ratios, Split, DEFAULT_MIN_SAMPLES, DEFAULT_SPLIT_RATIOS};
use crate::mfcc::MfccSettings;
use crate::pipeline::{PipelineConfig, VariantShapes};
use crate::rearrange::RearrangeConfig;
use crate::reduce::AutoencoderConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub min_samples: usize,
    /// Train, validation, test.
    pub ratios: [f64; 3],
    pub normalize_labels: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            min_samples: DEFAULT_MIN_SAMPLES,
            ratios: DEFAULT_SPLIT_RATIOS,
            normalize_labels: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Name written in the dataset column of the ablation table.
    pub dataset: String,
    /// Seeds for ablation repetitions.
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            seeds: vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// Cluster individual clips instead of class means.
    pub per_clip: bool,
    pub split: Split,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            per_clip: false,
            split: Split::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Propagated to the split, the autoencoder and the classifier.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub ingest: IngestConfig,
    pub mfcc: MfccSettings,
    pub rearrange: RearrangeConfig,
    pub reduce: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub shapes: VariantShapes,
    pub eval: EvalConfig,
    pub cluster: ClusterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            ingest: IngestConfig::default(),
            mfcc: MfccSettings::default(),
            rearrange: RearrangeConfig::default(),
            reduce: AutoencoderConfig::default(),
            classifier: ClassifierConfig::default(),
            shapes: VariantShapes::default(),
            eval: EvalConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.ingest.min_samples == 0 {
            return Err(Error::config("ingest.min_samples", "must be ≥ 1"));
        }
        validate_ratios(self.ingest.ratios).map_err(|e| match e {
            Error::InvalidConfig { reason, .. } => Error::config("ingest.ratios", reason),
            other => other,
        })?;
        if self.eval.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "at least one seed is required"));
        }
        self.pipeline().validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            mfcc: self.mfcc.clone(),
            rearrange: self.rearrange.clone(),
            reduce: self.reduce.clone(),
            classifier: self.classifier.clone(),
            shapes: self.shapes.clone(),
        }
        .with_seed(self.seed)
    }
}

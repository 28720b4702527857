//! Animal-sound classification from MFCC features: rearrangement of the
//! feature matrix, autoencoder reduction and an attention Bi-LSTM
//! classifier, plus evaluation, sweeps and clustering of learned
//! representations.

pub mod classifier;
pub mod cluster;
pub mod config;
pub mod container;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod linalg;
pub mod mfcc;
pub mod nn;
pub mod pipeline;
pub mod rearrange;
pub mod reduce;
pub mod synth;

pub use classifier::{ClassifierConfig, InputShape, ModelVariant, TrainingLog};
pub use cluster::{Dendrogram, EmbeddingSet};
pub use config::RunConfig;
pub use container::{Container, Tensor};
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, MetricsReport, SweepSpec};
pub use ingest::{AudioClip, DatasetManifest, ManifestEntry, Split, SplitAssignment};
pub use linalg::Matrix;
pub use mfcc::{FeatureMatrix, MfccConfig, MfccSettings};
pub use nn::{BiLstmAttentionModel, Parameters};
pub use pipeline::{FeatureSplits, FittedPipeline, LabeledFeatures, PipelineConfig};
pub use rearrange::{CappedVector, RearrangeConfig, RearrangedMatrix};
pub use reduce::{AutoencoderConfig, AutoencoderParams, Standardizer};

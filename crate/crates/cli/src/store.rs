//! On-disk feature store: one container per clip plus `index.json`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mdrr_core::ingest::load_wav;
use mdrr_core::mfcc::extract_mfcc;
use mdrr_core::pipeline::{label_index, FeatureSplits, LabeledFeatures};
use mdrr_core::{Container, FeatureMatrix, ManifestEntry, MfccSettings, Split, SplitAssignment};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::run::{sha256_bytes, sha256_json};

pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub source: PathBuf,
    pub label: String,
    pub split: Split,
    /// Relative to the store directory.
    pub file: PathBuf,
    pub source_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub source: PathBuf,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub settings_sha256: String,
    /// Sorted class names of the training split.
    pub labels: Vec<String>,
    pub entries: Vec<IndexEntry>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Default)]
pub struct ExtractSummary {
    pub extracted: usize,
    pub skipped: usize,
    pub failed: usize,
}

enum Outcome {
    Extracted(IndexEntry),
    Skipped(IndexEntry),
    Failed(Failure),
}

fn feature_file(source: &Path) -> PathBuf {
    let h = sha256_bytes(source.as_os_str().as_encoded_bytes());
    PathBuf::from(format!("{}.mfcc", &h[..20]))
}

fn is_current(path: &Path, source_sha: &str, settings_sha: &str) -> bool {
    let Ok(c) = Container::read(path) else {
        return false;
    };
    c.meta["source_sha256"] == source_sha && c.meta["settings_sha256"] == settings_sha
}

fn extract_one(
    entry: &ManifestEntry,
    split: Split,
    settings: &MfccSettings,
    settings_sha: &str,
    dir: &Path,
) -> std::result::Result<Outcome, String> {
    let bytes = fs::read(&entry.path).map_err(|e| e.to_string())?;
    let source_sha256 = sha256_bytes(&bytes);
    let file = feature_file(&entry.path);
    let target = dir.join(&file);
    let mut index = IndexEntry {
        id: String::new(),
        source: entry.path.clone(),
        label: entry.label.clone(),
        split,
        file,
        source_sha256,
    };
    if is_current(&target, &index.source_sha256, settings_sha) {
        let c = Container::read(&target).map_err(|e| e.to_string())?;
        index.id = c.meta["id"].as_str().unwrap_or_default().to_string();
        return Ok(Outcome::Skipped(index));
    }
    let clip = load_wav(&entry.path).map_err(|e| e.to_string())?;
    let cfg = settings.resolve(clip.sample_rate).map_err(|e| e.to_string())?;
    let m = extract_mfcc(&clip, &cfg).map_err(|e| e.to_string())?;
    let mut c = m.to_container(&cfg, clip.sample_rate);
    c.meta["id"] = clip.id.clone().into();
    c.meta["source_sha256"] = index.source_sha256.clone().into();
    c.meta["settings_sha256"] = settings_sha.into();
    c.write(&target).map_err(|e| e.to_string())?;
    index.id = clip.id;
    Ok(Outcome::Extracted(index))
}

/// Featurizes every clip of `splits` into `dir`, reusing up-to-date files.
pub fn extract(
    splits: &SplitAssignment,
    settings: &MfccSettings,
    dir: &Path,
) -> Result<(FeatureIndex, ExtractSummary)> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let settings_sha = sha256_json(settings);
    let jobs: Vec<(&ManifestEntry, Split)> = [Split::Train, Split::Val, Split::Test]
        .into_iter()
        .flat_map(|s| splits.part(s).iter().map(move |e| (e, s)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(e, s)| {
            extract_one(e, s, settings, &settings_sha, dir).unwrap_or_else(|error| {
                Outcome::Failed(Failure {
                    source: e.path.clone(),
                    error,
                })
            })
        })
        .collect();

    let mut summary = ExtractSummary::default();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Outcome::Extracted(e) => {
                summary.extracted += 1;
                entries.push(e);
            }
            Outcome::Skipped(e) => {
                summary.skipped += 1;
                entries.push(e);
            }
            Outcome::Failed(f) => {
                log::error!("{}: {}", f.source.display(), f.error);
                summary.failed += 1;
                failures.push(f);
            }
        }
    }
    let mut labels: Vec<String> = splits.train.iter().map(|e| e.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let index = FeatureIndex {
        settings_sha256: settings_sha,
        labels,
        entries,
        failures,
    };
    let path = dir.join(INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index)?).with_context(|| format!("writing {}", path.display()))?;
    Ok((index, summary))
}

impl FeatureIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {} (run `mdrr extract` first)", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Loads one split, labeling against `labels`.
    pub fn load_split(&self, dir: &Path, split: Split, labels: &[String]) -> Result<Vec<LabeledFeatures>> {
        self.entries
            .par_iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let c = Container::read(dir.join(&e.file))?;
                Ok(LabeledFeatures {
                    id: e.id.clone(),
                    label: label_index(labels, &e.label)?,
                    features: FeatureMatrix::from_container(&c)?,
                })
            })
            .collect()
    }

    pub fn load_all(&self, dir: &Path) -> Result<FeatureSplits> {
        if self.labels.is_empty() {
            bail!("feature index has no training classes");
        }
        Ok(FeatureSplits {
            train: self.load_split(dir, Split::Train, &self.labels)?,
            val: self.load_split(dir, Split::Val, &self.labels)?,
            test: self.load_split(dir, Split::Test, &self.labels)?,
            labels: self.labels.clone(),
        })
    }
}

//! Dataset ingestion: WAV loading, labeled manifests, the minimum-sample
//! filter, label normalization and stratified train/validation/test splits.

mod wav;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use wav::{load_wav, write_wav_pcm16};

/// Default minimum number of recordings a species needs to be kept.
pub const DEFAULT_MIN_SAMPLES: usize = 4;
pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.7, 0.2, 0.1];

#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    pub id: String,
    /// Mono amplitudes in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: String,
}

impl AudioClip {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub class_counts: BTreeMap<String, usize>,
    /// Non-audio files and nested directories passed over while scanning.
    #[serde(skip)]
    pub skipped: usize,
}

impl DatasetManifest {
    pub fn from_entries(mut entries: Vec<ManifestEntry>) -> Self {
        entries.sort();
        let mut class_counts = BTreeMap::new();
        for e in &entries {
            *class_counts.entry(e.label.clone()).or_insert(0) += 1;
        }
        Self {
            entries,
            class_counts,
            skipped: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.class_counts.keys().cloned().collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = read_json(path.as_ref())?;
        if Self::from_entries(m.entries.clone()).class_counts != m.class_counts {
            return Err(Error::format(path.as_ref(), "class_counts disagree with entries"));
        }
        Ok(m)
    }
}

fn is_audio(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Scans `root/<label>/<file>.wav`. Anything else inside a label directory
/// is skipped and counted in [`DatasetManifest::skipped`].
pub fn build_manifest(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let mut label_dirs = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_dir() {
            label_dirs.push(entry.path());
        }
    }
    if label_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "no labeled subdirectories in {}",
            root.display()
        )));
    }
    label_dirs.sort();

    let mut entries = Vec::new();
    let mut skipped = 0;
    for dir in &label_dirs {
        let label = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for f in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let f = f.map_err(|e| Error::io(dir, e))?;
            let path = f.path();
            let is_file = f.file_type().map_err(|e| Error::io(&path, e))?.is_file();
            if is_file && is_audio(&path) {
                entries.push(ManifestEntry {
                    path,
                    label: label.clone(),
                });
            } else {
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} non-audio entries under {}", root.display());
    }
    if entries.is_empty() {
        return Err(Error::Dataset(format!("no audio files under {}", root.display())));
    }
    let mut manifest = DatasetManifest::from_entries(entries);
    manifest.skipped = skipped;
    Ok(manifest)
}

/// Drops every class with fewer than `threshold` recordings.
pub fn filter_min_samples(manifest: &DatasetManifest, threshold: usize) -> Result<DatasetManifest> {
    if threshold < 1 {
        return Err(Error::config("threshold", "must be at least 1"));
    }
    let entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| manifest.class_counts.get(&e.label).copied().unwrap_or(0) >= threshold)
        .cloned()
        .collect();
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "empty after filtering: no class has {threshold} or more samples"
        )));
    }
    let mut out = DatasetManifest::from_entries(entries);
    out.skipped = manifest.skipped;
    Ok(out)
}

/// Lowercase, trim, and collapse internal whitespace runs to `_`.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Rewrites every label with [`normalize_label`]; classes that collide are
/// merged.
pub fn normalize_labels(manifest: &DatasetManifest) -> DatasetManifest {
    let entries = manifest
        .entries
        .iter()
        .map(|e| ManifestEntry {
            path: e.path.clone(),
            label: normalize_label(&e.label),
        })
        .collect();
    let mut out = DatasetManifest::from_entries(entries);
    out.skipped = manifest.skipped;
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<ManifestEntry>,
    pub val: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::config("split", format!("unknown split {other:?}"))),
        }
    }
}

impl SplitAssignment {
    pub fn part(&self, split: Split) -> &[ManifestEntry] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

fn floor_share(ratio: f64, n: usize) -> usize {
    // the epsilon absorbs products like 0.7 * 10 landing just under an integer
    (ratio * n as f64 + 1e-9).floor() as usize
}

pub fn validate_ratios(ratios: [f64; 3]) -> Result<()> {
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::config("ratios", "must be finite and non-negative"));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config("ratios", format!("sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Stratified split: each class is shuffled by a seeded generator, then
/// `⌊ratio_val·n⌋` entries go to validation, `⌊ratio_test·n⌋` to test and the
/// remainder to training.
pub fn split_dataset(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    validate_ratios(ratios)?;
    if manifest.is_empty() {
        return Err(Error::Dataset("cannot split an empty manifest".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &manifest.entries {
        by_class.entry(&e.label).or_default().push(e);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SplitAssignment {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
        ratios,
    };
    let mut too_small = Vec::new();
    for (label, mut items) in by_class {
        items.shuffle(&mut rng);
        let n = items.len();
        let n_val = floor_share(ratios[1], n);
        let n_test = floor_share(ratios[2], n);
        if n_val + n_test >= n {
            too_small.push(format!("{label} (n={n})"));
            continue;
        }
        out.val.extend(items[..n_val].iter().map(|e| (*e).clone()));
        out.test
            .extend(items[n_val..n_val + n_test].iter().map(|e| (*e).clone()));
        out.train.extend(items[n_val + n_test..].iter().map(|e| (*e).clone()));
    }
    if !too_small.is_empty() {
        return Err(Error::Dataset(format!(
            "classes too small to keep a training example: {}",
            too_small.join(", ")
        )));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

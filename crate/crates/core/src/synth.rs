//! Synthetic tone corpus: one pure tone per class plus white noise at a
//! fixed signal-to-noise ratio. Separable by construction.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_wav_pcm16, AudioClip, DatasetManifest, ManifestEntry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub frequencies: Vec<f64>,
    pub clips_per_class: usize,
    pub duration_secs: f64,
    pub sample_rate: u32,
    pub snr_db: f64,
    pub amplitude_range: [f64; 2],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frequencies: vec![440.0, 880.0, 1760.0],
            clips_per_class: 40,
            duration_secs: 1.0,
            sample_rate: 16_000,
            snr_db: 20.0,
            amplitude_range: [0.3, 0.8],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frequencies.is_empty() || self.clips_per_class == 0 {
            return Err(Error::config(
                "synth",
                "need at least one frequency and one clip per class",
            ));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if self.frequencies.iter().any(|&f| !(f > 0.0 && f < nyquist)) {
            return Err(Error::config(
                "synth.frequencies",
                format!("must lie in (0, {nyquist}) Hz"),
            ));
        }
        if !(self.duration_secs > 0.0) || self.sample_rate == 0 {
            return Err(Error::config(
                "synth.duration_secs",
                "duration and sample rate must be positive",
            ));
        }
        let [lo, hi] = self.amplitude_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::config("synth.amplitude_range", "need 0 < low ≤ high < 1"));
        }
        Ok(())
    }
}

pub fn tone_label(freq: f64) -> String {
    format!("tone_{freq}")
}

/// Clips ordered by class, then index.
pub fn tone_corpus(config: &SynthConfig) -> Result<Vec<AudioClip>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sr = f64::from(config.sample_rate);
    let len = (config.duration_secs * sr).round() as usize;
    let mut clips = Vec::new();
    for &freq in &config.frequencies {
        let label = tone_label(freq);
        for i in 0..config.clips_per_class {
            let amp = rng.random_range(config.amplitude_range[0]..=config.amplitude_range[1]);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            // sine RMS is amp / √2
            let noise_std = amp / std::f64::consts::SQRT_2 / 10f64.powf(config.snr_db / 20.0);
            let noise = Normal::new(0.0, noise_std).expect("finite std");
            let samples = (0..len)
                .map(|n| {
                    let t = n as f64 / sr;
                    let s = amp * (std::f64::consts::TAU * freq * t + phase).sin() + noise.sample(&mut rng);
                    s.clamp(-1.0, 1.0)
                })
                .collect();
            clips.push(AudioClip {
                id: format!("{label}_{i:03}"),
                samples,
                sample_rate: config.sample_rate,
                label: label.clone(),
            });
        }
    }
    Ok(clips)
}

/// Writes `root/<label>/<id>.wav` as 16-bit PCM.
pub fn write_corpus(clips: &[AudioClip], root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let mut entries = Vec::with_capacity(clips.len());
    for c in clips {
        let dir = root.join(&c.label);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{}.wav", c.id));
        write_wav_pcm16(&path, &c.samples, c.sample_rate)?;
        entries.push(ManifestEntry {
            path,
            label: c.label.clone(),
        });
    }
    Ok(DatasetManifest::from_entries(entries))
}

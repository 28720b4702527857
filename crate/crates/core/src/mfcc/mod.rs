//! MFCC extraction: pre-emphasis, framing, Hann-windowed power spectrum,
//! triangular mel filterbank, log compression and orthonormal DCT-II.
//!
//! The output [`FeatureMatrix`] has one row per cepstral coefficient and one
//! column per frame.

mod fft;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{Container, Tensor};
use crate::error::{Error, Result};
use crate::ingest::AudioClip;
use crate::linalg::Matrix;

pub use fft::{fft_in_place, real_fft};

/// Rate-independent MFCC settings, as stored in run configs. Frame and hop
/// lengths are given in milliseconds and resolved against each clip's own
/// sample rate by [`MfccSettings::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccSettings {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Defaults to the next power of two at or above the frame length.
    pub fft_size: Option<usize>,
    pub mel_bands: usize,
    pub coefficients: usize,
    pub fmin: f64,
    /// Defaults to the Nyquist frequency.
    pub fmax: Option<f64>,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccSettings {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            hop_ms: 10.0,
            fft_size: None,
            mel_bands: 40,
            coefficients: 20,
            fmin: 0.0,
            fmax: None,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl MfccSettings {
    pub fn resolve(&self, sample_rate: u32) -> Result<MfccConfig> {
        if !(self.frame_ms > 0.0 && self.hop_ms > 0.0) {
            return Err(Error::config("mfcc.frame_ms/hop_ms", "must be positive"));
        }
        let sr = f64::from(sample_rate);
        let frame_length = ((self.frame_ms / 1000.0 * sr).round() as usize).max(1);
        let hop_length = ((self.hop_ms / 1000.0 * sr).round() as usize).max(1);
        let cfg = MfccConfig {
            frame_length,
            hop_length,
            fft_size: self.fft_size.unwrap_or_else(|| frame_length.next_power_of_two()),
            mel_bands: self.mel_bands,
            coefficients: self.coefficients,
            fmin: self.fmin,
            fmax: self.fmax.unwrap_or(sr / 2.0),
            pre_emphasis: self.pre_emphasis,
            log_floor: self.log_floor,
        };
        cfg.validate(sample_rate)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        // every rate-independent constraint is checked by resolving at a
        // representative rate
        self.resolve(self.fmax.map_or(16_000, |f| (2.0 * f).ceil() as u32))
            .map(|_| ())
    }
}

/// MFCC parameters in samples for one sample rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfccConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    pub fft_size: usize,
    pub mel_bands: usize,
    pub coefficients: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl MfccConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.frame_length == 0 || self.hop_length == 0 {
            return Err(Error::config("mfcc.frame_length", "frame and hop must be ≥ 1"));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.frame_length {
            return Err(Error::config(
                "mfcc.fft_size",
                format!(
                    "{} must be a power of two ≥ frame length {}",
                    self.fft_size, self.frame_length
                ),
            ));
        }
        if self.coefficients == 0 || self.coefficients > self.mel_bands {
            return Err(Error::config(
                "mfcc.coefficients",
                format!("need 0 < {} ≤ mel_bands {}", self.coefficients, self.mel_bands),
            ));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::config(
                "mfcc.fmin/fmax",
                format!("need 0 ≤ fmin < fmax ≤ {nyquist}"),
            ));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::config("mfcc.pre_emphasis", "must lie in [0, 1)"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::config("mfcc.log_floor", "must be positive"));
        }
        Ok(())
    }
}

/// Cepstral coefficients × frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    values: Matrix,
}

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.cols() == 0 || values.rows() == 0 {
            return Err(Error::Shape("feature matrix needs D ≥ 1 and N ≥ 1".into()));
        }
        if !values.is_finite() {
            return Err(Error::Shape("feature matrix has non-finite values".into()));
        }
        Ok(Self { values })
    }

    /// Coefficient count D.
    pub fn coefficients(&self) -> usize {
        self.values.rows()
    }

    /// Frame count N.
    pub fn frames(&self) -> usize {
        self.values.cols()
    }

    pub fn get(&self, coefficient: usize, frame: usize) -> f64 {
        self.values.get(coefficient, frame)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Writes one CSV row per coefficient plus a JSON sidecar at
    /// `<path>.json` holding the shape and the extraction config.
    pub fn write_csv(&self, path: impl AsRef<Path>, config: &MfccConfig, sample_rate: u32) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::with_capacity(self.coefficients() * self.frames() * 20);
        for d in 0..self.coefficients() {
            let row: Vec<String> = self.values.row(d).iter().map(|v| v.to_string()).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
        let sidecar = FeatureSidecar {
            coefficients: self.coefficients(),
            frames: self.frames(),
            sample_rate,
            config: config.clone(),
        };
        crate::ingest::write_json(&sidecar_path(path), &sidecar)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<(Self, FeatureSidecar)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sidecar: FeatureSidecar = crate::ingest::read_json(&sidecar_path(path))?;
        let mut data = Vec::with_capacity(sidecar.coefficients * sidecar.frames);
        let mut rows = 0;
        for line in text.lines().filter(|l| !l.is_empty()) {
            rows += 1;
            let before = data.len();
            for field in line.split(',') {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(path, format!("bad number {field:?}")))?;
                data.push(v);
            }
            if data.len() - before != sidecar.frames {
                return Err(Error::format(path, format!("row {rows} has wrong length")));
            }
        }
        if rows != sidecar.coefficients {
            return Err(Error::format(path, "row count disagrees with sidecar"));
        }
        let m = Self::new(Matrix::from_vec(rows, sidecar.frames, data))?;
        Ok((m, sidecar))
    }

    pub fn to_container(&self, config: &MfccConfig, sample_rate: u32) -> Container {
        let mut c = Container::new(serde_json::json!({
            "kind": "mfcc",
            "sample_rate": sample_rate,
            "config": config,
        }));
        c.push(Tensor::new(
            "mfcc",
            vec![self.coefficients(), self.frames()],
            self.values.as_slice().to_vec(),
        ));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let t = c.require("mfcc")?;
        if t.shape.len() != 2 {
            return Err(Error::Shape("mfcc tensor must be 2-D".into()));
        }
        Self::new(Matrix::from_vec(t.shape[0], t.shape[1], t.data.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub coefficients: usize,
    pub frames: usize,
    pub sample_rate: u32,
    pub config: MfccConfig,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Number of frames for a signal of `len` samples.
pub fn frame_count(len: usize, frame_length: usize, hop_length: usize) -> usize {
    len.saturating_sub(frame_length).div_ceil(hop_length) + 1
}

/// Applies pre-emphasis, then cuts frames every `hop_length` samples. The
/// last frame is zero-padded to `frame_length`.
pub fn frame_signal(clip: &AudioClip, config: &MfccConfig) -> Vec<Vec<f64>> {
    let x = &clip.samples;
    let mut emph = Vec::with_capacity(x.len());
    for (t, &v) in x.iter().enumerate() {
        let prev = if t == 0 { 0.0 } else { x[t - 1] };
        emph.push(v - config.pre_emphasis * prev);
    }
    let n = frame_count(emph.len(), config.frame_length, config.hop_length);
    (0..n)
        .map(|j| {
            let start = j * config.hop_length;
            let end = (start + config.frame_length).min(emph.len());
            let mut frame = vec![0.0; config.frame_length];
            if start < end {
                frame[..end - start].copy_from_slice(&emph[start..end]);
            }
            frame
        })
        .collect()
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// One-sided power spectrum `|DFT|²` of the Hann-windowed frame,
/// zero-padded to `fft_size`. Returns `fft_size / 2 + 1` bins.
pub fn power_spectrum(frame: &[f64], fft_size: usize) -> Vec<f64> {
    power_spectrum_windowed(frame, &hann_window(frame.len()), fft_size)
}

fn power_spectrum_windowed(frame: &[f64], window: &[f64], fft_size: usize) -> Vec<f64> {
    assert!(frame.len() <= fft_size, "frame longer than fft size");
    let windowed: Vec<f64> = frame.iter().zip(window).map(|(x, w)| x * w).collect();
    let (re, im) = real_fft(&windowed, fft_size);
    (0..=fft_size / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the `mel_bands` filters plus the two edge
/// points, equally spaced in mel between `fmin` and `fmax`.
pub fn mel_points_hz(config: &MfccConfig) -> Vec<f64> {
    let lo = hz_to_mel(config.fmin);
    let hi = hz_to_mel(config.fmax);
    let steps = config.mel_bands + 1;
    (0..=steps)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / steps as f64))
        .collect()
}

/// Triangular filters, `mel_bands × (fft_size/2 + 1)`. Errors when a filter
/// falls between two FFT bins and would be empty.
pub fn mel_filterbank(config: &MfccConfig, sample_rate: u32) -> Result<Matrix> {
    config.validate(sample_rate)?;
    let bins = config.fft_size / 2 + 1;
    let bin_hz = f64::from(sample_rate) / config.fft_size as f64;
    let pts = mel_points_hz(config);
    let mut fb = Matrix::zeros(config.mel_bands, bins);
    for m in 0..config.mel_bands {
        let (lo, c, hi) = (pts[m], pts[m + 1], pts[m + 2]);
        let mut any = false;
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            };
            if w > 0.0 {
                any = true;
                fb.set(m, k, w);
            }
        }
        if !any {
            return Err(Error::config(
                "mfcc.mel_bands",
                format!(
                    "{} bands too many for fft size {} at {sample_rate} Hz: band {m} is empty",
                    config.mel_bands, config.fft_size
                ),
            ));
        }
    }
    Ok(fb)
}

/// Orthonormal DCT-II basis, `size × size`; row k is basis vector k.
pub fn dct_matrix(size: usize) -> Matrix {
    let k_len = size as f64;
    Matrix::from_fn(size, size, |k, n| {
        let scale = if k == 0 {
            (1.0 / k_len).sqrt()
        } else {
            (2.0 / k_len).sqrt()
        };
        scale * (PI * k as f64 * (2.0 * n as f64 + 1.0) / (2.0 * k_len)).cos()
    })
}

/// First `d` orthonormal DCT-II coefficients of `x`.
pub fn dct_ii(x: &[f64], d: usize) -> Vec<f64> {
    assert!(d <= x.len(), "dct_ii: asked for {d} of {} coefficients", x.len());
    let basis = dct_matrix(x.len());
    (0..d).map(|k| crate::linalg::dot(basis.row(k), x)).collect()
}

/// Precomputed window, filterbank and DCT basis for one config and rate.
#[derive(Clone, Debug)]
pub struct MfccExtractor {
    config: MfccConfig,
    sample_rate: u32,
    window: Vec<f64>,
    filterbank: Matrix,
    dct: Matrix,
}

impl MfccExtractor {
    pub fn new(config: MfccConfig, sample_rate: u32) -> Result<Self> {
        let filterbank = mel_filterbank(&config, sample_rate)?;
        Ok(Self {
            window: hann_window(config.frame_length),
            dct: dct_matrix(config.mel_bands),
            filterbank,
            config,
            sample_rate,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.config
    }

    pub fn extract(&self, clip: &AudioClip) -> Result<FeatureMatrix> {
        if clip.sample_rate != self.sample_rate {
            return Err(Error::config(
                "sample_rate",
                format!(
                    "extractor built for {} Hz, clip is {} Hz",
                    self.sample_rate, clip.sample_rate
                ),
            ));
        }
        if clip.samples.is_empty() {
            return Err(Error::Dataset(format!("clip {} is empty", clip.id)));
        }
        let frames = frame_signal(clip, &self.config);
        let d = self.config.coefficients;
        let mut out = Matrix::zeros(d, frames.len());
        let mut log_mel = vec![0.0; self.config.mel_bands];
        for (j, frame) in frames.iter().enumerate() {
            let spec = power_spectrum_windowed(frame, &self.window, self.config.fft_size);
            for (m, slot) in log_mel.iter_mut().enumerate() {
                let energy = crate::linalg::dot(self.filterbank.row(m), &spec);
                *slot = energy.max(self.config.log_floor).ln();
            }
            for k in 0..d {
                out.set(k, j, crate::linalg::dot(self.dct.row(k), &log_mel));
            }
        }
        FeatureMatrix::new(out)
    }
}

/// Convenience wrapper building a one-off [`MfccExtractor`].
pub fn extract_mfcc(clip: &AudioClip, config: &MfccConfig) -> Result<FeatureMatrix> {
    MfccExtractor::new(config.clone(), clip.sample_rate)?.extract(clip)
}

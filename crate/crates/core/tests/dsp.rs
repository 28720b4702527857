mod common;

use mdrr_core::container::Container;
use mdrr_core::ingest::AudioClip;
use mdrr_core::mfcc::{
    dct_ii, dct_matrix, extract_mfcc, fft_in_place, frame_count, frame_signal, hann_window, hz_to_mel, mel_filterbank,
    mel_points_hz, mel_to_hz, power_spectrum, FeatureMatrix, MfccSettings,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn clip(samples: Vec<f64>, sample_rate: u32) -> AudioClip {
    AudioClip {
        id: "c".into(),
        samples,
        sample_rate,
        label: "x".into(),
    }
}

fn sine(freq: f64, amp: f64, len: usize, sr: u32) -> Vec<f64> {
    (0..len)
        .map(|n| amp * (std::f64::consts::TAU * freq * n as f64 / f64::from(sr)).sin())
        .collect()
}

proptest! {
    #[test]
    fn fft_matches_dft(log_n in 0u32..10, seed in any::<u64>()) {
        let n = 1usize << log_n;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let re = common::random_vec(&mut rng, n, 1.0);
        let im = common::random_vec(&mut rng, n, 1.0);
        let (wr, wi) = common::dft(&re, &im);
        let (mut gr, mut gi) = (re, im);
        fft_in_place(&mut gr, &mut gi);
        let scale = wr.iter().chain(&wi).fold(1e-300f64, |a, v| a.max(v.abs()));
        for k in 0..n {
            prop_assert!((gr[k] - wr[k]).hypot(gi[k] - wi[k]) / scale <= 1e-9);
        }
    }

    #[test]
    fn mel_round_trip(hz in 0.0f64..24_000.0) {
        prop_assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() <= 1e-9 * hz.max(1.0));
    }
}

#[test]
fn cosine_at_bin_dominates() {
    let n = 64;
    let k = 5;
    let frame: Vec<f64> = (0..n)
        .map(|t| (std::f64::consts::TAU * k as f64 * t as f64 / n as f64).cos())
        .collect();
    let spec = power_spectrum(&frame, n);
    let peak = spec[k];
    for (b, &p) in spec.iter().enumerate() {
        if b.abs_diff(k) > 1 {
            assert!(peak >= 10.0 * p, "bin {b}: {p} vs peak {peak}");
        }
    }
}

#[test]
fn windowed_impulse_matches_dft() {
    let n = 16;
    let mut frame = vec![0.0; n];
    frame[3] = 1.0;
    let w = hann_window(n);
    let windowed: Vec<f64> = frame.iter().zip(&w).map(|(a, b)| a * b).collect();
    let (re, im) = common::dft(&windowed, &vec![0.0; n]);
    let spec = power_spectrum(&frame, n);
    for k in 0..=n / 2 {
        assert!((spec[k] - (re[k] * re[k] + im[k] * im[k])).abs() < 1e-9);
        assert!((spec[k] - w[3] * w[3]).abs() < 1e-9);
    }
}

#[test]
fn dct_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = common::random_vec(&mut rng, 8, 1.0);
    let got = dct_ii(&x, 8);
    let k_len = 8.0f64;
    for (k, g) in got.iter().enumerate() {
        let mut s = 0.0;
        for (n, v) in x.iter().enumerate() {
            s += v * (std::f64::consts::PI * k as f64 * (2.0 * n as f64 + 1.0) / (2.0 * k_len)).cos();
        }
        let norm = if k == 0 {
            (1.0 / k_len).sqrt()
        } else {
            (2.0 / k_len).sqrt()
        };
        assert!((g - norm * s).abs() < 1e-12);
    }
}

#[test]
fn dct_orthonormal_for_band_counts() {
    for size in [20, 40, 64] {
        let c = dct_matrix(size);
        let p = c.matmul(&c.transpose());
        for i in 0..size {
            for j in 0..size {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((p.get(i, j) - want).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn mel_reference_points() {
    assert_eq!(hz_to_mel(0.0), 0.0);
    assert!((hz_to_mel(1000.0) - 999.99).abs() < 0.01);
}

#[test]
fn filter_centers_increase() {
    let cfg = MfccSettings::default().resolve(16_000).unwrap();
    let pts = mel_points_hz(&cfg);
    assert!(pts.windows(2).all(|w| w[0] < w[1]));
    let fb = mel_filterbank(&cfg, 16_000).unwrap();
    assert_eq!(fb.rows(), 40);
}

#[test]
fn frame_counts() {
    assert_eq!(frame_count(400, 400, 160), 1);
    let cfg = MfccSettings {
        pre_emphasis: 0.0,
        ..Default::default()
    }
    .resolve(16_000)
    .unwrap();
    // frame starts 0 and 160; the second ends exactly at sample 560
    let samples: Vec<f64> = (0..560).map(|i| (i + 1) as f64 / 1e3).collect();
    let frames = frame_signal(&clip(samples.clone(), 16_000), &cfg);
    assert_eq!(frames.len(), 2);
    assert_eq!(&frames[1][..], &samples[160..]);
    // doubling a hop-aligned duration adds L / hop frames
    for l in [1600usize, 3200, 16_000] {
        assert_eq!(frame_count(2 * l, 400, 160) - frame_count(l, 400, 160), l / 160);
    }
}

#[test]
fn amplitude_scale_moves_only_c0() {
    let settings = MfccSettings::default();
    let cfg = settings.resolve(16_000).unwrap();
    // a faint noise bed keeps every mel band above the log floor
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = common::random_vec(&mut rng, 8000, 0.01);
    let base: Vec<f64> = sine(700.0, 0.2, 8000, 16_000)
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + n)
        .collect();
    let a = extract_mfcc(&clip(base.clone(), 16_000), &cfg).unwrap();
    let b = extract_mfcc(&clip(base.iter().map(|v| 2.0 * v).collect(), 16_000), &cfg).unwrap();
    let shift = (settings.mel_bands as f64).sqrt() * 4f64.ln();
    for t in 0..a.frames() {
        assert!((b.get(0, t) - a.get(0, t) - shift).abs() < 1e-6);
        for d in 1..a.coefficients() {
            assert!((b.get(d, t) - a.get(d, t)).abs() < 1e-6);
        }
    }
}

#[test]
fn extraction_is_deterministic_and_sized() {
    let cfg = MfccSettings::default().resolve(16_000).unwrap();
    let c = clip(sine(440.0, 0.5, 16_000, 16_000), 16_000);
    let a = extract_mfcc(&c, &cfg).unwrap();
    let b = extract_mfcc(&c, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.coefficients(), a.frames()), (20, 99));
}

#[test]
fn feature_files_round_trip_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = MfccSettings::default().resolve(8_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = extract_mfcc(&clip(common::random_vec(&mut rng, 4000, 0.9), 8_000), &cfg).unwrap();
    let csv_path = dir.path().join("m.csv");
    m.write_csv(&csv_path, &cfg, 8_000).unwrap();
    let (back, sidecar) = FeatureMatrix::read_csv(&csv_path).unwrap();
    let bits = |f: &FeatureMatrix| f.values().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&m));
    assert_eq!(sidecar.sample_rate, 8_000);
    let bin = dir.path().join("m.bin");
    m.to_container(&cfg, 8_000).write(&bin).unwrap();
    let back = FeatureMatrix::from_container(&Container::read(&bin).unwrap()).unwrap();
    assert_eq!(bits(&back), bits(&m));
}

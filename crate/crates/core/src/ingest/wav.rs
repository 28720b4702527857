//! Minimal RIFF/WAVE reader and writer for uncompressed integer PCM.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::AudioClip;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

struct FmtChunk {
    format_code: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Loads a PCM WAV file. 16-bit samples are scaled by 1/32768, 8-bit samples
/// are re-centred around 128 and scaled by 1/128, and stereo is averaged to
/// mono. The clip label is the name of the containing directory.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (sample_rate, samples) = decode_wav(&bytes).map_err(|e| match e {
        DecodeError::Unsupported { format_code, bits } => Error::UnsupportedWav {
            path: path.to_path_buf(),
            format_code,
            bits,
        },
        DecodeError::Malformed(reason) => Error::Wav {
            path: path.to_path_buf(),
            reason,
        },
    })?;
    let label = path
        .parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(AudioClip {
        id: path.to_string_lossy().into_owned(),
        samples,
        sample_rate,
        label,
    })
}

#[derive(Debug)]
enum DecodeError {
    Unsupported { format_code: u16, bits: u16 },
    Malformed(String),
}

fn malformed(reason: impl Into<String>) -> DecodeError {
    DecodeError::Malformed(reason.into())
}

fn decode_wav(bytes: &[u8]) -> std::result::Result<(u32, Vec<f64>), DecodeError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("not a RIFF/WAVE container"));
    }
    let mut fmt: Option<FmtChunk> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body_start + size > bytes.len() {
                    return Err(malformed("truncated fmt chunk"));
                }
                let body = &bytes[body_start..body_start + size];
                let mut format_code = u16_at(body, 0);
                if format_code == FORMAT_EXTENSIBLE && size >= 26 {
                    // first two bytes of the sub-format GUID carry the real code
                    format_code = u16_at(body, 24);
                }
                fmt = Some(FmtChunk {
                    format_code,
                    channels: u16_at(body, 2),
                    sample_rate: u32_at(body, 4),
                    block_align: u16_at(body, 12),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => {
                let fmt = fmt.ok_or_else(|| malformed("data chunk before fmt chunk"))?;
                if body_start + size > bytes.len() {
                    return Err(malformed(format!(
                        "truncated data chunk: header declares {size} bytes, {} present",
                        bytes.len().saturating_sub(body_start)
                    )));
                }
                return decode_pcm(&fmt, &bytes[body_start..body_start + size]).map(|s| (fmt.sample_rate, s));
            }
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    Err(malformed("no data chunk"))
}

fn decode_pcm(fmt: &FmtChunk, data: &[u8]) -> std::result::Result<Vec<f64>, DecodeError> {
    if fmt.format_code != FORMAT_PCM || !(fmt.bits == 8 || fmt.bits == 16) {
        return Err(DecodeError::Unsupported {
            format_code: fmt.format_code,
            bits: fmt.bits,
        });
    }
    if !(fmt.channels == 1 || fmt.channels == 2) {
        return Err(malformed(format!("{} channels unsupported", fmt.channels)));
    }
    if fmt.sample_rate == 0 {
        return Err(malformed("sample rate is zero"));
    }
    let bytes_per_sample = usize::from(fmt.bits / 8);
    let frame = bytes_per_sample * usize::from(fmt.channels);
    if usize::from(fmt.block_align) != frame {
        return Err(malformed(format!(
            "block align {} does not match {} channels of {} bits",
            fmt.block_align, fmt.channels, fmt.bits
        )));
    }
    if !data.len().is_multiple_of(frame) {
        return Err(malformed("truncated data chunk: partial sample frame"));
    }
    if data.is_empty() {
        return Err(malformed("data chunk holds no samples"));
    }
    let sample = |chunk: &[u8]| -> f64 {
        match bytes_per_sample {
            1 => (f64::from(chunk[0]) - 128.0) / 128.0,
            _ => f64::from(i16::from_le_bytes([chunk[0], chunk[1]])) / 32768.0,
        }
    };
    let samples = data
        .chunks_exact(frame)
        .map(|f| {
            if fmt.channels == 1 {
                sample(f)
            } else {
                (sample(&f[..bytes_per_sample]) + sample(&f[bytes_per_sample..])) / 2.0
            }
        })
        .collect();
    Ok(samples)
}

/// Writes mono 16-bit PCM. Samples are clamped to [-1, 1] and quantized by
/// rounding `x · 32768`, so anything produced by [`load_wav`] round-trips.
pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let data_len = samples.len() * 2;
    let mut buf = Vec::with_capacity(44 + data_len);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    buf.extend_from_slice(b"WAVEfmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    buf.extend_from_slice(&1u16.to_le_bytes());
    buf.extend_from_slice(&sample_rate.to_le_bytes());
    buf.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    buf.extend_from_slice(&2u16.to_le_bytes());
    buf.extend_from_slice(&16u16.to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        buf.extend_from_slice(&q.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(format: u16, channels: u16, bits: u16, data: &[u8]) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&format.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&(8000 * u32::from(block)).to_le_bytes());
        b.extend_from_slice(&block.to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(data);
        b
    }

    #[test]
    fn sixteen_bit_mono_scaling() {
        let (sr, s) = decode_wav(&wav_bytes(1, 1, 16, &16384i16.to_le_bytes())).unwrap();
        assert_eq!(sr, 8000);
        assert_eq!(s, vec![0.5]);
    }

    #[test]
    fn stereo_downmix_cancels() {
        let mut data = Vec::new();
        for _ in 0..2 {
            data.extend_from_slice(&16384i16.to_le_bytes());
            data.extend_from_slice(&(-16384i16).to_le_bytes());
        }
        let (_, s) = decode_wav(&wav_bytes(1, 2, 16, &data)).unwrap();
        assert_eq!(s, vec![0.0, 0.0]);
    }

    #[test]
    fn eight_bit_affine_map() {
        let (_, s) = decode_wav(&wav_bytes(1, 1, 8, &[0, 128, 192, 255])).unwrap();
        assert_eq!(s, vec![-1.0, 0.0, 0.5, 127.0 / 128.0]);
    }

    #[test]
    fn float_format_reports_code() {
        let err = decode_wav(&wav_bytes(3, 1, 32, &[0; 4])).unwrap_err();
        match err {
            DecodeError::Unsupported { format_code, bits } => {
                assert_eq!(format_code, 3);
                assert_eq!(bits, 32);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn twenty_four_bit_rejected() {
        assert!(matches!(
            decode_wav(&wav_bytes(1, 1, 24, &[0; 6])),
            Err(DecodeError::Unsupported { bits: 24, .. })
        ));
    }

    #[test]
    fn truncated_data_chunk() {
        let mut b = wav_bytes(1, 1, 16, &[0; 20]);
        b.truncate(b.len() - 7);
        let err = decode_wav(&b).unwrap_err();
        assert!(matches!(err, DecodeError::Malformed(ref m) if m.contains("truncated")));
    }

    #[test]
    fn not_riff() {
        assert!(decode_wav(b"hello world, not audio").is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_wav("/definitely/not/here.wav"), Err(Error::Io { .. })));
    }
}

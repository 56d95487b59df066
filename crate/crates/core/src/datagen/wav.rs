use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavFormat {
    #[default]
    Float32,
    Pcm16,
}

fn wav_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

/// Reads a mono PCM-16 or float-32 file. PCM samples are scaled by 1/32768.
pub fn wav_read(path: &Path) -> Result<(Vec<f32>, u32)> {
    let mut reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(path, format!("expected mono, found {} channels", spec.channels)));
    }
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.samples::<f32>().collect::<std::result::Result<Vec<_>, _>>(),
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<Vec<_>, _>>(),
        (fmt, bits) => return Err(wav_err(path, format!("unsupported encoding {fmt:?} with {bits} bits"))),
    }
    .map_err(|e| wav_err(path, e))?;
    Ok((samples, spec.sample_rate))
}

/// Writes a mono file. PCM-16 output is rounded and clipped to the 16-bit range.
pub fn wav_write(path: &Path, samples: &[f32], sample_rate: u32, format: WavFormat) -> Result<()> {
    let (bits, sample_format) = match format {
        WavFormat::Float32 => (32, SampleFormat::Float),
        WavFormat::Pcm16 => (16, SampleFormat::Int),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in samples {
        match format {
            WavFormat::Float32 => w.write_sample(s),
            WavFormat::Pcm16 => w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
        }
        .map_err(|e| wav_err(path, e))?;
    }
    w.finalize().map_err(|e| wav_err(path, e))
}

#[cfg(test)]
mod tests {
    use numcore::Rng;

    use super::*;

    fn signal() -> Vec<f32> {
        let mut rng = Rng::new(0);
        (0..1000).map(|_| rng.uniform(-0.9, 0.9) as f32).collect()
    }

    #[test]
    fn float_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = signal();
        wav_write(&p, &x, 8000, WavFormat::Float32).unwrap();
        assert_eq!(wav_read(&p).unwrap(), (x, 8000));
    }

    #[test]
    fn pcm_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let x = signal();
        wav_write(&p, &x, 16000, WavFormat::Pcm16).unwrap();
        let (y, sr) = wav_read(&p).unwrap();
        assert_eq!(sr, 16000);
        let d = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(d <= 1.0 / 32768.0);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        wav_write(&p, &signal(), 8000, WavFormat::Float32).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..30]).unwrap();
        assert!(matches!(wav_read(&p), Err(Error::Wav { .. })));
    }

    #[test]
    fn stereo_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for _ in 0..8 {
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(wav_read(&p), Err(Error::Wav { .. })));
    }
}

//! Mono 16-bit PCM WAV files.

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::CliError;

/// Mono samples in `[-1, 1)` with their sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct WavFile {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn hound_error(path: &Path, e: hound::Error) -> CliError {
    match e {
        hound::Error::IoError(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Format(format!("{}: {other}", path.display())),
    }
}

pub fn read(path: &Path) -> Result<WavFile, CliError> {
    let reader = hound::WavReader::open(path).map_err(|e| hound_error(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::Format(format!(
            "{}: expected a mono file, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(CliError::Format(format!(
            "{}: expected 16-bit PCM, found {} bits ({:?})",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| hound_error(path, e))?;
    Ok(WavFile {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Quantises one sample: clamp to the representable range, then round.
pub fn quantize(v: f64) -> i16 {
    (v * 32768.0)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn write(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), CliError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_error(path, e))?;
    for &s in samples {
        let v = if s.is_finite() { s } else { 0.0 };
        writer
            .write_sample(quantize(v))
            .map_err(|e| hound_error(path, e))?;
    }
    writer.finalize().map_err(|e| hound_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_clamps_and_rounds() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), i16::MAX);
        assert_eq!(quantize(-1.0), i16::MIN);
        assert_eq!(quantize(-7.0), i16::MIN);
        assert_eq!(quantize(0.6 / 32768.0), 1);
        assert_eq!(quantize(-0.4 / 32768.0), 0);
    }

    #[test]
    fn round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let x: Vec<f64> = (0..500).map(|i| ((i as f64) * 0.37).sin() * 0.9).collect();
        write(&path, &x, 22050).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back.sample_rate, 22050);
        for (a, b) in x.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}

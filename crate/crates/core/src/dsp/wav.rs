//! PCM 16-bit mono WAV ingestion and emission. Anything else is rejected;
//! resampling happens offline.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Wav {
        path: path.into(),
        message: e.to_string(),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav {
            path: path.into(),
            message: format!("expected mono, got {} channels", spec.channels),
        });
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Wav {
            path: path.into(),
            message: format!(
                "expected 16-bit PCM, got {:?} {} bit",
                spec.sample_format, spec.bits_per_sample
            ),
        });
    }
    let samples: Vec<f64> = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Wav {
            path: path.into(),
            message: e.to_string(),
        })?;
    Waveform::new(samples, spec.sample_rate)
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| Error::Wav {
        path: path.into(),
        message: e.to_string(),
    })?;
    for &s in &w.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| Error::Wav {
            path: path.into(),
            message: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| Error::Wav {
        path: path.into(),
        message: e.to_string(),
    })
}

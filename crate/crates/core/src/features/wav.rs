use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

const ACCEPTED_RATES: [u32; 2] = [8000, 16000];

/// Read a 16-bit PCM mono WAV at 8 or 16 kHz.
pub fn read_wav(path: &Path, utterance_id: &str, speaker_id: &str) -> Result<Waveform> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != SampleFormat::Int {
        return Err(Error::InvalidWaveform(format!(
            "{}: expected 16-bit PCM mono, got {} channel(s), {} bits, {:?}",
            path.display(),
            spec.channels,
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    if !ACCEPTED_RATES.contains(&spec.sample_rate) {
        return Err(Error::InvalidWaveform(format!(
            "{}: unsupported sample rate {}",
            path.display(),
            spec.sample_rate
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Waveform::new(samples, spec.sample_rate, utterance_id, speaker_id)
}

/// Write 16-bit PCM mono; samples are clipped to [-1, 1].
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for &s in w.samples() {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

//! Acoustic front end: waveforms, STFT power spectra, log-mel filter-bank
//! energies (LFBE), per-speaker mean normalization and frame stacking.

mod cache;
mod manifest;
mod mel;
mod normalize;
mod stack;
mod stft;
mod wav;

pub use cache::{decode_features, encode_features, read_feature_file, write_feature_file, FEATURE_MAGIC};
pub use manifest::{read_manifest, write_manifest, UtteranceRecord};
pub use mel::{hz_to_mel, mel_lfbe, mel_to_hz, MelFilterbank, LOG_FLOOR};
pub use normalize::per_speaker_normalize;
pub use stack::stack_frames;
pub use stft::{compute_stft, PowerSpectrum, StftConfig};
pub use wav::{read_wav, write_wav};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Raw mono audio for one utterance.
#[derive(Clone, Debug)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
    pub utterance_id: String,
    pub speaker_id: String,
}

impl Waveform {
    pub fn new(
        samples: Vec<f64>,
        sample_rate: u32,
        utterance_id: impl Into<String>,
        speaker_id: impl Into<String>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            utterance_id: utterance_id.into(),
            speaker_id: speaker_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
}

/// What the rows of a [`Spectrogram`] represent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DimLabel {
    MelBin,
    Stacked,
}

/// A `D × T` matrix of features: `D` feature dimensions by `T` frames.
///
/// Storage is frame-major, so frame `t` is the contiguous slice
/// `values()[t * D .. (t + 1) * D]`. Read as a row-major matrix this is the
/// `T × D` layout the models consume.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    dims: usize,
    frames: usize,
    values: Vec<f64>,
    frame_hop: f64,
    dim_label: DimLabel,
}

impl Spectrogram {
    /// Build from frame-major values.
    pub fn new(
        dims: usize,
        frames: usize,
        values: Vec<f64>,
        frame_hop: f64,
        dim_label: DimLabel,
    ) -> Result<Self> {
        if dims == 0 || frames == 0 {
            return Err(Error::InvalidArgument(format!(
                "spectrogram must be non-empty, got {dims}x{frames}"
            )));
        }
        if values.len() != dims * frames {
            return Err(Error::shape("spectrogram", &[dims * frames], &[values.len()]));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectrogram values".into()));
        }
        Ok(Self {
            dims,
            frames,
            values,
            frame_hop,
            dim_label,
        })
    }

    /// Build from a function of `(d, t)`.
    pub fn from_fn(
        dims: usize,
        frames: usize,
        frame_hop: f64,
        dim_label: DimLabel,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(dims * frames);
        for t in 0..frames {
            for d in 0..dims {
                values.push(f(d, t));
            }
        }
        Self::new(dims, frames, values, frame_hop, dim_label)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame_hop(&self) -> f64 {
        self.frame_hop
    }

    pub fn dim_label(&self) -> DimLabel {
        self.dim_label
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.dims, self.frames]
    }

    pub fn get(&self, d: usize, t: usize) -> f64 {
        self.values[t * self.dims + d]
    }

    pub fn set(&mut self, d: usize, t: usize, v: f64) {
        self.values[t * self.dims + d] = v;
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.dims..(t + 1) * self.dims]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// The `T × D` tensor view used by the models.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.frames, self.dims, self.values.clone())
            .expect("spectrogram storage is consistent")
    }
}

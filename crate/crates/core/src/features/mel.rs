use super::{DimLabel, PowerSpectrum, Spectrogram};
use crate::error::{Error, Result};

/// Floor applied to filter-bank energies before the log.
pub const LOG_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale from 0 Hz to Nyquist.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    n_mels: usize,
    bins: usize,
    /// `n_mels × bins`, row-major.
    weights: Vec<f64>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32) -> Result<Self> {
        let bins = n_fft / 2 + 1;
        if n_mels == 0 {
            return Err(Error::InvalidArgument("n_mels must be at least 1".into()));
        }
        if n_mels > bins {
            return Err(Error::InvalidArgument(format!(
                "n_mels ({n_mels}) exceeds the number of frequency bins ({bins})"
            )));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = |k: usize| k as f64 * sample_rate as f64 / n_fft as f64;

        let mut weights = vec![0.0; n_mels * bins];
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = bin_hz(k);
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                weights[m * bins + k] = w;
            }
        }
        Ok(Self {
            n_mels,
            bins,
            weights,
            centers_hz: edges[1..=n_mels].to_vec(),
        })
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn weight(&self, mel: usize, bin: usize) -> f64 {
        self.weights[mel * self.bins + bin]
    }

    pub fn center_hz(&self, mel: usize) -> f64 {
        self.centers_hz[mel]
    }

    /// Linear filter-bank energies of one power frame.
    pub fn apply(&self, power_frame: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.bins)
            .map(|row| row.iter().zip(power_frame).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Log mel filter-bank energies: `log(max(filterbank · power, LOG_FLOOR))`.
pub fn mel_lfbe(power: &PowerSpectrum, n_mels: usize) -> Result<Spectrogram> {
    let fb = MelFilterbank::new(n_mels, power.n_fft, power.sample_rate)?;
    if fb.bins() != power.bins {
        return Err(Error::shape("mel_lfbe", &[fb.bins()], &[power.bins]));
    }
    let mut values = Vec::with_capacity(n_mels * power.frames);
    for t in 0..power.frames {
        values.extend(fb.apply(power.frame(t)).into_iter().map(|e| e.max(LOG_FLOOR).ln()));
    }
    Spectrogram::new(n_mels, power.frames, values, power.hop_seconds, DimLabel::MelBin)
}

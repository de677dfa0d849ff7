use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

/// Framing parameters of the short-time Fourier transform.
///
/// The window is Hann (periodic) and the FFT size is the next power of two
/// at or above the window length. No pre-emphasis is applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
        }
    }
}

impl StftConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.hop_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn n_fft(&self, sample_rate: u32) -> usize {
        self.window_samples(sample_rate).next_power_of_two()
    }
}

/// Power spectrogram, `F × T` with `F = n_fft / 2 + 1`, frame-major.
#[derive(Clone, Debug)]
pub struct PowerSpectrum {
    pub bins: usize,
    pub frames: usize,
    pub n_fft: usize,
    pub sample_rate: u32,
    pub hop_seconds: f64,
    pub data: Vec<f64>,
}

impl PowerSpectrum {
    pub fn get(&self, bin: usize, t: usize) -> f64 {
        self.data[t * self.bins + bin]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }
}

pub(crate) fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Frame, window and transform a waveform into a power spectrogram.
pub fn compute_stft(w: &Waveform, config: &StftConfig) -> Result<PowerSpectrum> {
    let sr = w.sample_rate();
    let win = config.window_samples(sr);
    let hop = config.hop_samples(sr);
    if win == 0 || hop == 0 {
        return Err(Error::InvalidArgument(format!(
            "window ({win}) and hop ({hop}) must be at least one sample"
        )));
    }
    let samples = w.samples();
    if samples.len() < win {
        return Err(Error::UtteranceTooShort {
            samples: samples.len(),
            window: win,
        });
    }
    let n_fft = win.next_power_of_two();
    let bins = n_fft / 2 + 1;
    let frames = 1 + (samples.len() - win) / hop;
    let window = hann_window(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            *slot = if i < win {
                Complex::new(samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        data.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }

    Ok(PowerSpectrum {
        bins,
        frames,
        n_fft,
        sample_rate: sr,
        hop_seconds: hop as f64 / sr as f64,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f64>, sr: u32) -> Waveform {
        Waveform::new(samples, sr, "u", "s").unwrap()
    }

    /// Direct O(N^2) DFT power of one windowed, zero-padded frame.
    fn dft_power(frame: &[f64], n_fft: usize) -> Vec<f64> {
        (0..=n_fft / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn zero_signal_gives_zero_power() {
        let p = compute_stft(&wave(vec![0.0; 1600], 16000), &StftConfig::default()).unwrap();
        assert!(p.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_count_boundary() {
        let cfg = StftConfig::default();
        let p = compute_stft(&wave(vec![0.1; 400], 16000), &cfg).unwrap();
        assert_eq!(p.frames, 1);
        let p = compute_stft(&wave(vec![0.1; 400 + 160 * 7 + 5], 16000), &cfg).unwrap();
        assert_eq!(p.frames, 8);
    }

    #[test]
    fn too_short_is_an_error() {
        let err = compute_stft(&wave(vec![0.1; 399], 16000), &StftConfig::default()).unwrap_err();
        assert!(matches!(err, Error::UtteranceTooShort { .. }));
        assert!(err.to_string().contains("utterance too short"));
    }

    #[test]
    fn sinusoid_at_bin_center_peaks_at_that_bin() {
        let sr = 16000;
        let cfg = StftConfig::default();
        let n_fft = cfg.n_fft(sr);
        let bin = 37;
        let freq = bin as f64 * sr as f64 / n_fft as f64;
        let samples: Vec<f64> = (0..4000)
            .map(|n| 0.5 * (2.0 * PI * freq * n as f64 / sr as f64).sin())
            .collect();
        let p = compute_stft(&wave(samples.clone(), sr), &cfg).unwrap();
        for t in 0..p.frames {
            let frame = p.frame(t);
            let argmax = (0..frame.len())
                .max_by(|&a, &b| frame[a].total_cmp(&frame[b]))
                .unwrap();
            assert_eq!(argmax, bin, "frame {t}");
        }

        // compare frame 3 with a direct DFT
        let win = cfg.window_samples(sr);
        let hop = cfg.hop_samples(sr);
        let window = hann_window(win);
        let windowed: Vec<f64> = (0..win).map(|i| samples[3 * hop + i] * window[i]).collect();
        let oracle = dft_power(&windowed, n_fft);
        for (k, expected) in oracle.iter().enumerate() {
            assert!((p.get(k, 3) - expected).abs() <= 1e-9 * expected.max(1.0));
        }
    }

    #[test]
    fn eight_khz_uses_256_point_fft() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.window_samples(8000), 200);
        assert_eq!(cfg.n_fft(8000), 256);
        assert_eq!(cfg.n_fft(16000), 512);
    }
}

//! Time/frequency masking and speed perturbation of spectrograms.
//!
//! Masks are sampled on the unstacked mel features; the same mask is
//! stacked alongside the features afterwards so that reconstruction targets
//! line up with the stacked model input.

use log::warn;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{stack_frames, DimLabel, Spectrogram};
use crate::rng::StreamRng;

/// Number and maximum width of frequency and time masks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    /// Number of frequency masks.
    pub m_f: usize,
    /// Maximum frequency-mask width (bins).
    pub n_f: usize,
    /// Number of time masks.
    pub m_t: usize,
    /// Maximum time-mask width (frames).
    pub n_t: usize,
    pub seed: u64,
}

impl Default for MaskSpec {
    fn default() -> Self {
        Self {
            m_f: 1,
            n_f: 8,
            m_t: 2,
            n_t: 16,
            seed: 0,
        }
    }
}

impl MaskSpec {
    /// True when no segment can ever be drawn.
    pub fn is_empty(&self) -> bool {
        (self.m_f == 0 || self.n_f == 0) && (self.m_t == 0 || self.n_t == 0)
    }

    /// Mask stream for one utterance in one epoch.
    pub fn stream(&self, utterance_id: &str, epoch: u64) -> StreamRng {
        crate::stream!(self.seed, "mask", utterance_id, epoch)
    }
}

/// Binary `D × T` mask; `false` marks a masked cell. Frame-major storage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    dims: usize,
    frames: usize,
    keep: Vec<bool>,
}

impl Mask {
    pub fn ones(dims: usize, frames: usize) -> Self {
        Self {
            dims,
            frames,
            keep: vec![true; dims * frames],
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.dims, self.frames]
    }

    /// Mask value `M_td` as 0.0 or 1.0.
    pub fn get(&self, d: usize, t: usize) -> f64 {
        if self.keep[t * self.dims + d] {
            1.0
        } else {
            0.0
        }
    }

    pub fn is_masked(&self, d: usize, t: usize) -> bool {
        !self.keep[t * self.dims + d]
    }

    pub fn mask_cell(&mut self, d: usize, t: usize) {
        self.keep[t * self.dims + d] = false;
    }

    pub fn mask_rows(&mut self, start: usize, width: usize) {
        for t in 0..self.frames {
            for d in start..start + width {
                self.keep[t * self.dims + d] = false;
            }
        }
    }

    pub fn mask_columns(&mut self, start: usize, width: usize) {
        for t in start..start + width {
            self.keep[t * self.dims..(t + 1) * self.dims].fill(false);
        }
    }

    pub fn masked_cells(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.masked_cells() as f64 / self.keep.len() as f64
    }

    pub fn fully_masked_columns(&self) -> usize {
        self.keep
            .chunks_exact(self.dims)
            .filter(|col| col.iter().all(|k| !k))
            .count()
    }

    pub fn fully_masked_rows(&self) -> usize {
        (0..self.dims)
            .filter(|&d| (0..self.frames).all(|t| self.is_masked(d, t)))
            .count()
    }

    /// Values as a frame-major `T × D` slice of 0.0/1.0.
    pub fn values(&self) -> Vec<f64> {
        self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_spectrogram(&self) -> Spectrogram {
        Spectrogram::new(self.dims, self.frames, self.values(), 0.0, DimLabel::MelBin)
            .expect("mask shape is valid")
    }

    /// Stack `k` consecutive frames exactly as [`stack_frames`] does.
    pub fn stack(&self, k: usize) -> Result<Mask> {
        let stacked = stack_frames(&self.to_spectrogram(), k)?;
        Ok(Mask {
            dims: stacked.dims(),
            frames: stacked.frames(),
            keep: stacked.values().iter().map(|&v| v != 0.0).collect(),
        })
    }

    pub fn from_values(dims: usize, frames: usize, values: &[f64]) -> Result<Mask> {
        if values.len() != dims * frames {
            return Err(Error::shape("mask", &[dims * frames], &[values.len()]));
        }
        if values.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidArgument("mask entries must be 0 or 1".into()));
        }
        Ok(Mask {
            dims,
            frames,
            keep: values.iter().map(|&v| v == 1.0).collect(),
        })
    }
}

fn clip_width(n: usize, dim: usize, axis: &str) -> usize {
    if n >= dim {
        warn!("max {axis} mask width {n} clipped to {}", dim - 1);
        dim - 1
    } else {
        n
    }
}

/// Draw `count` segments of width `U{0..=max}` with starts `U{0..=dim-w}`.
fn draw_segments<R: Rng + ?Sized>(rng: &mut R, count: usize, max: usize, dim: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| {
            let w = rng.gen_range(0..=max);
            let s = rng.gen_range(0..=dim - w);
            (s, w)
        })
        .collect()
}

fn check_dims(dims: usize, frames: usize) -> Result<()> {
    if dims == 0 || frames == 0 {
        return Err(Error::InvalidArgument(format!("mask shape must be positive, got {dims}x{frames}")));
    }
    Ok(())
}

/// Contiguous time and frequency masks. Segments may overlap.
pub fn sample_mask<R: Rng + ?Sized>(dims: usize, frames: usize, spec: &MaskSpec, rng: &mut R) -> Result<Mask> {
    check_dims(dims, frames)?;
    let n_f = clip_width(spec.n_f, dims, "frequency");
    let n_t = clip_width(spec.n_t, frames, "time");
    let mut mask = Mask::ones(dims, frames);
    for (s, w) in draw_segments(rng, spec.m_f, n_f, dims) {
        mask.mask_rows(s, w);
    }
    for (s, w) in draw_segments(rng, spec.m_t, n_t, frames) {
        mask.mask_columns(s, w);
    }
    Ok(mask)
}

fn union_len(segments: &[(usize, usize)], dim: usize) -> usize {
    let mut covered = vec![false; dim];
    for &(s, w) in segments {
        covered[s..s + w].fill(true);
    }
    covered.iter().filter(|c| **c).count()
}

/// Non-contiguous ablation of [`sample_mask`].
///
/// Segments are drawn exactly as for the contiguous mask; the number of
/// distinct rows and columns they cover is then masked at individually
/// random positions. The numbers of masked frequency bins and frames, and
/// hence the masked-cell count, follow the contiguous distribution.
pub fn sample_scattered_mask<R: Rng + ?Sized>(
    dims: usize,
    frames: usize,
    spec: &MaskSpec,
    rng: &mut R,
) -> Result<Mask> {
    check_dims(dims, frames)?;
    let n_f = clip_width(spec.n_f, dims, "frequency");
    let n_t = clip_width(spec.n_t, frames, "time");
    let rows = union_len(&draw_segments(rng, spec.m_f, n_f, dims), dims);
    let cols = union_len(&draw_segments(rng, spec.m_t, n_t, frames), frames);
    let mut mask = Mask::ones(dims, frames);
    for d in sample_indices(rng, dims, rows) {
        mask.mask_rows(d, 1);
    }
    for t in sample_indices(rng, frames, cols) {
        mask.mask_columns(t, 1);
    }
    Ok(mask)
}

/// Elementwise `M ⊙ X`.
pub fn apply_mask(x: &Spectrogram, m: &Mask) -> Result<Spectrogram> {
    if x.shape() != m.shape() {
        return Err(Error::shape("apply_mask", &x.shape(), &m.shape()));
    }
    let values = x.values().iter().zip(&m.keep).map(|(&v, &k)| if k { v } else { 0.0 }).collect();
    Spectrogram::new(x.dims(), x.frames(), values, x.frame_hop(), x.dim_label())
}

/// Resample along time by linear interpolation.
///
/// Output has `max(1, floor(T / factor))` frames; frame `j` interpolates the
/// input at position `j · factor`, clamped to `[0, T-1]`.
pub fn speed_perturb(x: &Spectrogram, factor: f64) -> Result<Spectrogram> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("speed factor must be positive, got {factor}")));
    }
    let t_in = x.frames();
    let t_out = ((t_in as f64 / factor + 1e-9).floor() as usize).max(1);
    let dims = x.dims();
    let mut values = Vec::with_capacity(dims * t_out);
    for j in 0..t_out {
        let pos = (j as f64 * factor).clamp(0.0, (t_in - 1) as f64);
        let lo = pos.floor() as usize;
        let frac = pos - lo as f64;
        if frac == 0.0 {
            values.extend_from_slice(x.frame(lo));
        } else {
            let (a, b) = (x.frame(lo), x.frame(lo + 1));
            values.extend(a.iter().zip(b).map(|(a, b)| (1.0 - frac) * a + frac * b));
        }
    }
    Spectrogram::new(dims, t_out, values, x.frame_hop() * factor, x.dim_label())
}

use super::{DimLabel, Spectrogram};
use crate::error::{Error, Result};

/// Concatenate every `k` consecutive frames into one frame of `k·D` dims.
///
/// Output frame `j` holds input frames `jk .. jk+k-1`; a final partial group
/// is padded by repeating the last input frame.
pub fn stack_frames(s: &Spectrogram, k: usize) -> Result<Spectrogram> {
    if k == 0 {
        return Err(Error::InvalidArgument("stack factor must be at least 1".into()));
    }
    if k == 1 {
        return Ok(s.clone());
    }
    let (dims, frames) = (s.dims(), s.frames());
    let out_frames = frames.div_ceil(k);
    let mut values = Vec::with_capacity(k * dims * out_frames);
    for j in 0..out_frames {
        for i in 0..k {
            let t = (j * k + i).min(frames - 1);
            values.extend_from_slice(s.frame(t));
        }
    }
    Spectrogram::new(
        k * dims,
        out_frames,
        values,
        s.frame_hop() * k as f64,
        DimLabel::Stacked,
    )
}

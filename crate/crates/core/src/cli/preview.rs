//! CSV and PGM renderings of a feature matrix, its mask and the masked input.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::augment::{apply_mask, sample_mask, Mask, MaskSpec};
use crate::error::{Error, Result};
use crate::features::Spectrogram;

/// `rows` lines of `cols` comma-separated values.
pub fn grid_csv(rows: usize, cols: usize, value: impl Fn(usize, usize) -> f64) -> String {
    let mut out = String::new();
    for r in 0..rows {
        for c in 0..cols {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{}", value(r, c)).expect("write to string");
        }
        out.push('\n');
    }
    out
}

/// Binary greyscale image; row 0 is the top of the picture.
pub fn pgm(rows: usize, cols: usize, pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for r in 0..rows {
        for c in 0..cols {
            out.push(pixel(r, c));
        }
    }
    out
}

pub const PREVIEW_FILES: [&str; 6] = ["x.csv", "mask.csv", "masked.csv", "x.pgm", "mask.pgm", "masked.pgm"];

/// Sample a mask for `features` and write X, M and M⊙X as `D × T` CSVs
/// and images (highest mel bin at the top).
pub fn write_preview(features: &Spectrogram, spec: &MaskSpec, id: &str, out: &Path) -> Result<Mask> {
    let (d, t) = (features.dims(), features.frames());
    let mask = sample_mask(d, t, spec, &mut spec.stream(id, 0))?;
    let masked = apply_mask(features, &mask)?;
    let (lo, hi) = features
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let grey = |v: f64| ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
    let mask_at = |r, c| if mask.is_masked(r, c) { 0.0 } else { 1.0 };

    let files: [(&str, Vec<u8>); 6] = [
        ("x.csv", grid_csv(d, t, |r, c| features.get(r, c)).into_bytes()),
        ("mask.csv", grid_csv(d, t, mask_at).into_bytes()),
        ("masked.csv", grid_csv(d, t, |r, c| masked.get(r, c)).into_bytes()),
        ("x.pgm", pgm(d, t, |r, c| grey(features.get(d - 1 - r, c)))),
        ("mask.pgm", pgm(d, t, |r, c| (mask_at(d - 1 - r, c) * 255.0) as u8)),
        ("masked.pgm", pgm(d, t, |r, c| grey(masked.get(d - 1 - r, c)))),
    ];
    for (name, bytes) in files {
        let p = out.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
    }
    Ok(mask)
}

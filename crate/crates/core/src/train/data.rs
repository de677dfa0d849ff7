//! Loading a manifest into normalized feature matrices, with an on-disk
//! cache.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::augment::speed_perturb;
use crate::error::{Error, Result};
use crate::features::{
    compute_stft, mel_lfbe, per_speaker_normalize, read_feature_file, read_manifest, read_wav, stack_frames,
    write_feature_file, Spectrogram, StftConfig, UtteranceRecord,
};
use crate::nn::Tensor;

/// Environment variable overriding the feature cache root.
pub const CACHE_ENV: &str = "MASKREC_CACHE";

/// One utterance with its `n_mels × T` features.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub record: UtteranceRecord,
    pub features: Spectrogram,
}

impl Utterance {
    pub fn id(&self) -> &str {
        &self.record.utterance_id
    }
}

/// Front-end settings that determine the cached features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrontEnd {
    pub n_mels: usize,
    pub normalize: bool,
}

pub fn lfbe_for_record(record: &UtteranceRecord, n_mels: usize) -> Result<Spectrogram> {
    let wav = read_wav(&record.audio_path, &record.utterance_id, &record.speaker_id)?;
    let power = compute_stft(&wav, &StftConfig::default())?;
    mel_lfbe(&power, n_mels)
}

/// Extract features for every record. Failures are collected and reported
/// together, one line per utterance.
pub fn extract_features(records: &[UtteranceRecord], front: FrontEnd) -> Result<Vec<Utterance>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("manifest"));
    }
    let results: Vec<Result<Spectrogram>> = records.par_iter().map(|r| lfbe_for_record(r, front.n_mels)).collect();
    let mut failures = Vec::new();
    let mut pairs = Vec::with_capacity(records.len());
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(s) => pairs.push((r.clone(), s)),
            Err(e) => failures.push(format!("{}: {e}", r.utterance_id)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Utterances(failures));
    }
    // rounded to f32 so fresh and cached features are identical
    Ok(per_speaker_normalize(pairs, front.normalize)?
        .into_iter()
        .map(|(record, mut features)| {
            features.values_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
            Utterance { record, features }
        })
        .collect())
}

/// Cache root: `$MASKREC_CACHE` if set, else `fallback`.
pub fn cache_root(fallback: &Path) -> PathBuf {
    match std::env::var_os(CACHE_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => fallback.to_path_buf(),
    }
}

/// Directory name keyed on the manifest, all referenced audio and the
/// front-end settings.
pub fn cache_key(records: &[UtteranceRecord], front: FrontEnd) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"maskrec-features-v1");
    h.update((front.n_mels as u64).to_le_bytes());
    h.update([front.normalize as u8]);
    for r in records {
        for field in [&r.utterance_id, &r.speaker_id] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
        let audio = fs::read(&r.audio_path).map_err(|e| Error::io(&r.audio_path, e))?;
        h.update((audio.len() as u64).to_le_bytes());
        h.update(&audio);
    }
    Ok(hex::encode(&h.finalize()[..12]))
}

/// File name for an utterance id; anything outside `[A-Za-z0-9._-]` maps
/// to `_`.
pub fn feature_file_name(utterance_id: &str) -> String {
    let safe: String = utterance_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.lfbe")
}

pub fn write_feature_dir(dir: &Path, utts: &[Utterance]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    utts.iter()
        .map(|u| {
            let p = dir.join(feature_file_name(u.id()));
            write_feature_file(&p, &u.features)?;
            Ok(p)
        })
        .collect()
}

/// Features for a manifest, reading from `cache_root/<key>/` when present
/// and filling the cache otherwise.
pub fn load_features(manifest: &Path, front: FrontEnd, cache_root: Option<&Path>) -> Result<Vec<Utterance>> {
    let records = read_manifest(manifest)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("manifest"));
    }
    let Some(root) = cache_root else {
        return extract_features(&records, front);
    };
    let dir = root.join(cache_key(&records, front)?);
    let files: Vec<PathBuf> = records.iter().map(|r| dir.join(feature_file_name(&r.utterance_id))).collect();
    if files.iter().all(|f| f.is_file()) {
        let mut utts = Vec::with_capacity(records.len());
        for (record, f) in records.into_iter().zip(&files) {
            utts.push(Utterance {
                record,
                features: read_feature_file(f)?,
            });
        }
        log::debug!("loaded {} cached feature files from {}", utts.len(), dir.display());
        return Ok(utts);
    }
    let utts = extract_features(&records, front)?;
    write_feature_dir(&dir, &utts)?;
    Ok(utts)
}

/// Stacked `T' × (k·D)` model input.
pub fn model_input(features: &Spectrogram, stack: usize) -> Result<Tensor> {
    Ok(stack_frames(features, stack)?.to_tensor())
}

/// A pretraining example: an utterance at one playback speed.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainItem {
    /// `utterance_id` for the original, `utterance_id@factor` for copies.
    pub item_id: String,
    pub factor: f64,
    pub features: Spectrogram,
}

/// The original of every utterance plus one speed-perturbed copy per factor.
pub fn expand_speed(utts: &[Utterance], factors: &[f64]) -> Result<Vec<PretrainItem>> {
    let mut items = Vec::with_capacity(utts.len() * (1 + factors.len()));
    for u in utts {
        items.push(PretrainItem {
            item_id: u.id().to_string(),
            factor: 1.0,
            features: u.features.clone(),
        });
        for &f in factors {
            items.push(PretrainItem {
                item_id: format!("{}@{f}", u.id()),
                factor: f,
                features: speed_perturb(&u.features, f)?,
            });
        }
    }
    Ok(items)
}

use std::collections::BTreeMap;

use super::{Spectrogram, UtteranceRecord};
use crate::error::{Error, Result};

/// Subtract each speaker's per-dimension mean, pooled over all frames of all
/// that speaker's utterances. Identity when `enabled` is false.
///
/// Means are accumulated in a first pass, in input order, then applied.
pub fn per_speaker_normalize(
    mut records: Vec<(UtteranceRecord, Spectrogram)>,
    enabled: bool,
) -> Result<Vec<(UtteranceRecord, Spectrogram)>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("per_speaker_normalize"));
    }
    if !enabled {
        return Ok(records);
    }
    let dims = records[0].1.dims();
    if let Some((r, s)) = records.iter().find(|(_, s)| s.dims() != dims) {
        return Err(Error::InvalidArgument(format!(
            "utterance {} has {} dims, expected {dims}",
            r.utterance_id,
            s.dims()
        )));
    }

    let mut sums: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for (rec, spec) in &records {
        let entry = sums
            .entry(rec.speaker_id.as_str())
            .or_insert_with(|| (vec![0.0; dims], 0));
        for t in 0..spec.frames() {
            for (acc, v) in entry.0.iter_mut().zip(spec.frame(t)) {
                *acc += v;
            }
        }
        entry.1 += spec.frames();
    }
    let means: BTreeMap<String, Vec<f64>> = sums
        .into_iter()
        .map(|(spk, (sum, n))| (spk.to_string(), sum.into_iter().map(|s| s / n as f64).collect()))
        .collect();

    for (rec, spec) in records.iter_mut() {
        let mean = &means[&rec.speaker_id];
        for frame in spec.values_mut().chunks_exact_mut(dims) {
            for (v, m) in frame.iter_mut().zip(mean) {
                *v -= m;
            }
        }
    }
    Ok(records)
}

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One line of a manifest.
///
/// Manifests are UTF-8, one record per line, tab-separated:
/// `utterance_id <TAB> speaker_id <TAB> audio_path [<TAB> transcript]`,
/// where the transcript is a space-separated token string. Relative audio
/// paths are resolved against the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub audio_path: PathBuf,
    pub transcript: Option<String>,
}

impl UtteranceRecord {
    pub fn tokens(&self) -> Vec<&str> {
        self.transcript
            .as_deref()
            .map(|t| t.split_whitespace().collect())
            .unwrap_or_default()
    }
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<UtteranceRecord>> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_err(format!("expected 3 or 4 tab-separated fields, got {}", fields.len())));
        }
        let id = fields[0].trim();
        if id.is_empty() || fields[1].trim().is_empty() {
            return Err(parse_err("empty utterance or speaker id".into()));
        }
        if !seen.insert(id.to_string()) {
            return Err(parse_err(format!("duplicate utterance id `{id}`")));
        }
        let audio = PathBuf::from(fields[2].trim());
        records.push(UtteranceRecord {
            utterance_id: id.to_string(),
            speaker_id: fields[1].trim().to_string(),
            audio_path: if audio.is_relative() { base.join(audio) } else { audio },
            transcript: fields.get(3).map(|t| t.trim().to_string()),
        });
    }
    Ok(records)
}

pub fn read_manifest(path: &Path) -> Result<Vec<UtteranceRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

/// Write records in order. Audio paths are written as stored.
pub fn write_manifest(path: &Path, records: &[UtteranceRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.utterance_id);
        out.push('\t');
        out.push_str(&r.speaker_id);
        out.push('\t');
        out.push_str(&r.audio_path.to_string_lossy());
        if let Some(t) = &r.transcript {
            out.push('\t');
            out.push_str(t);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = "u1\ts1\ta.wav\tx y z\nu2\ts2\t/abs/b.wav\n\n";
        let recs = parse_manifest(text, Path::new("/data/m.tsv")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].audio_path, PathBuf::from("/data/a.wav"));
        assert_eq!(recs[0].tokens(), vec!["x", "y", "z"]);
        assert_eq!(recs[1].audio_path, PathBuf::from("/abs/b.wav"));
        assert_eq!(recs[1].transcript, None);
    }

    #[test]
    fn duplicate_ids_rejected_with_line() {
        let err = parse_manifest("u1\ts\ta.wav\nu1\ts\tb.wav\n", Path::new("m.tsv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}

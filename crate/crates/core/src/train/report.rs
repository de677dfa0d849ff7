use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Stage;
use crate::error::{Error, Result};

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub stage: Stage,
    pub epoch: usize,
    /// Training items seen this epoch.
    pub items: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    /// Percent; fine-tuning only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_error_rate: Option<f64>,
    /// Mean masked fraction of training inputs; pretraining only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masked_fraction: Option<f64>,
    /// True when only a subset of parameters was trainable.
    pub frozen: bool,
    /// L2 norm of the parameter change over the epoch, per group.
    pub param_change: BTreeMap<String, f64>,
    pub wall_seconds: f64,
}

impl EpochReport {
    /// The metric used for checkpoint selection.
    pub fn selection_metric(&self) -> f64 {
        self.dev_error_rate.unwrap_or(self.dev_loss)
    }

    /// Same report with the wall-clock field cleared, for comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            wall_seconds: 0.0,
            ..self.clone()
        }
    }
}

pub fn append_report(path: &Path, report: &EpochReport) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(report).expect("report serializes");
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

pub fn write_reports(path: &Path, reports: &[EpochReport]) -> Result<()> {
    let mut text = String::new();
    for r in reports {
        text.push_str(&serde_json::to_string(r).expect("report serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_reports(path: &Path) -> Result<Vec<EpochReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_reports(&text, path)
}

pub fn parse_reports(text: &str, path: &Path) -> Result<Vec<EpochReport>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: EpochReport = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(epoch: usize) -> EpochReport {
        EpochReport {
            stage: Stage::Finetune,
            epoch,
            items: 3,
            steps: 1,
            train_loss: 1.5,
            dev_loss: 0.1 + epoch as f64,
            dev_error_rate: Some(12.5),
            masked_fraction: None,
            frozen: false,
            param_change: BTreeMap::from([("ctc".to_string(), 0.25)]),
            wall_seconds: 0.01,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        append_report(&p, &report(1)).unwrap();
        append_report(&p, &report(2)).unwrap();
        assert_eq!(read_reports(&p).unwrap(), vec![report(1), report(2)]);
    }

    #[test]
    fn malformed_line_is_located() {
        let text = format!("{}\nnot json\n", serde_json::to_string(&report(1)).unwrap());
        match parse_reports(&text, Path::new("m.jsonl")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridStatus {
    Ok,
    Diverged,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub lr: f64,
    pub dropout: f64,
    pub status: GridStatus,
    /// Dev metric; `None` unless `status` is `Ok`.
    pub metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Clone, Debug)]
pub struct GridReport {
    pub best: TrainConfig,
    /// Every candidate, best first.
    pub table: Vec<GridEntry>,
}

/// `lr_grid × dropout_grid`, in that nesting order.
pub fn grid_candidates(base: &TrainConfig) -> Vec<TrainConfig> {
    let mut out = Vec::new();
    for &lr in &base.lr_grid {
        for &dropout in &base.dropout_grid {
            out.push(TrainConfig {
                lr,
                dropout,
                ..base.clone()
            });
        }
    }
    out
}

fn is_divergence(e: &Error) -> bool {
    matches!(e, Error::NonFinite(_) | Error::NonFiniteGradient(_))
}

fn rank(a: &(GridEntry, usize), b: &(GridEntry, usize)) -> Ordering {
    let key = |e: &GridEntry| match (&e.status, e.metric) {
        (GridStatus::Ok, Some(m)) => (0, m),
        (GridStatus::Diverged, _) => (1, 0.0),
        _ => (2, 0.0),
    };
    let (ka, kb) = (key(&a.0), key(&b.0));
    ka.0.cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(a.0.lr.total_cmp(&b.0.lr))
        .then(a.0.dropout.total_cmp(&b.0.dropout))
        .then(a.1.cmp(&b.1))
}

/// Train the first `budget` candidates with `train`, which returns the dev
/// metric (lower is better). Numeric blow-ups are recorded as diverged and
/// ranked last; any other error aborts the search.
pub fn grid_search<F>(candidates: &[TrainConfig], budget: usize, mut train: F) -> Result<GridReport>
where
    F: FnMut(&TrainConfig) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::EmptyInput("grid candidates"));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for (i, cfg) in candidates.iter().enumerate() {
        let mut entry = GridEntry {
            lr: cfg.lr,
            dropout: cfg.dropout,
            status: GridStatus::Skipped,
            metric: None,
            detail: None,
        };
        if i < budget {
            match train(cfg) {
                Ok(m) if m.is_finite() => {
                    entry.status = GridStatus::Ok;
                    entry.metric = Some(m);
                }
                Ok(m) => {
                    entry.status = GridStatus::Diverged;
                    entry.detail = Some(format!("metric {m}"));
                }
                Err(e) if is_divergence(&e) => {
                    entry.status = GridStatus::Diverged;
                    entry.detail = Some(e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        rows.push((entry, i));
    }
    rows.sort_by(rank);
    let best = candidates[rows[0].1].clone();
    Ok(GridReport {
        best,
        table: rows.into_iter().map(|(e, _)| e).collect(),
    })
}

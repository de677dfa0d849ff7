//! Optimization, the pretraining and fine-tuning loops, and grid search.
//!
//! Both loops share one epoch driver. Items are shuffled per epoch from a
//! seeded stream and split into mini-batches; each item's gradient is
//! computed on its own copy of the model (possibly on another thread) and
//! the copies are summed in item order, so results do not depend on the
//! number of workers.

mod adam;
mod config;
mod data;
mod finetune;
mod grid;
mod pretrain;
mod report;

pub use adam::{adam_step, clip_grad_norm, AdamState, BETA1, BETA2, EPSILON};
pub use config::{Preset, Stage, TrainConfig, DROPOUT_GRID};
pub use data::{
    cache_key, cache_root, expand_speed, extract_features, feature_file_name, lfbe_for_record, load_features,
    model_input, write_feature_dir, FrontEnd, PretrainItem, Utterance, CACHE_ENV,
};
pub use finetune::{finetune, initial_asr_model, label_sequences, FinetuneInit, FinetuneOutcome};
pub use grid::{grid_candidates, grid_search, GridEntry, GridReport, GridStatus};
pub use pretrain::{pretrain, PretrainOutcome};
pub use report::{append_report, parse_reports, read_reports, write_reports, EpochReport};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{load_checkpoint, param_group, save_checkpoint, Model, ModelCheckpoint};
use crate::nn::Module;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const STATE_FILE: &str = "state.json";

/// Where and how a run persists its progress.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Write metrics, checkpoints and resume state here.
    pub out_dir: Option<PathBuf>,
    /// Continue from the state in `out_dir`.
    pub resume: bool,
    /// Stop after this many completed epochs, as if interrupted.
    pub halt_after: Option<usize>,
}

impl RunOptions {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: Some(dir.into()),
            ..Self::default()
        }
    }
}

pub(crate) struct ItemResult {
    pub loss: f64,
    pub masked_fraction: Option<f64>,
}

pub(crate) struct DevResult {
    pub loss: f64,
    pub error_rate: Option<f64>,
}

/// What the epoch driver needs from a training objective.
pub(crate) trait Task: Sync {
    type Model: Module + Clone + Send + Sync;
    type Item: Sync;

    fn stage(&self) -> config::Stage;
    fn items(&self) -> &[Self::Item];
    fn item_loss(&self, model: &mut Self::Model, item: &Self::Item, epoch: usize) -> Result<ItemResult>;
    fn evaluate(&self, model: &Self::Model) -> Result<DevResult>;
    /// `None` means everything is trainable.
    fn trainable(&self, epoch: usize) -> Option<fn(&str) -> bool>;
    fn wrap(model: &Self::Model) -> Model;
    fn unwrap(checkpoint: ModelCheckpoint) -> Result<Self::Model>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ResumeState {
    config: String,
    completed_epochs: usize,
    adam: AdamState,
    best_metric: f64,
    best_epoch: usize,
    bad_epochs: usize,
    initial_dev: f64,
    reports: Vec<EpochReport>,
}

pub(crate) struct RunOutcome<M> {
    pub best: M,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub initial_dev: f64,
    pub reports: Vec<EpochReport>,
    pub stopped_early: bool,
}

fn group_norms<M: Module>(before: &[f64], model: &M) -> BTreeMap<String, f64> {
    let mut sq: BTreeMap<String, f64> = BTreeMap::new();
    let mut offset = 0;
    model.visit_params(&mut |p| {
        let n = p.value.len();
        let d: f64 = p.value.data().iter().zip(&before[offset..offset + n]).map(|(a, b)| (a - b) * (a - b)).sum();
        *sq.entry(param_group(&p.name).to_string()).or_default() += d;
        offset += n;
    });
    sq.into_iter().map(|(k, v)| (k, v.sqrt())).collect()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Summed gradients of one mini-batch, reduced in item order.
fn batch_gradients<T: Task>(task: &T, model: &T::Model, batch: &[usize], epoch: usize) -> Result<(Vec<f64>, Vec<ItemResult>)> {
    let items = task.items();
    let results: Vec<Result<(ItemResult, Vec<f64>)>> = batch
        .par_iter()
        .map_init(
            || model.clone(),
            |m, &i| {
                m.zero_grad();
                let r = task.item_loss(m, &items[i], epoch)?;
                Ok((r, m.flat_grads()))
            },
        )
        .collect();
    let mut sum: Option<Vec<f64>> = None;
    let mut losses = Vec::with_capacity(batch.len());
    for r in results {
        let (item, grads) = r?;
        match &mut sum {
            None => sum = Some(grads),
            Some(s) => s.iter_mut().zip(&grads).for_each(|(a, b)| *a += b),
        }
        losses.push(item);
    }
    Ok((sum.unwrap_or_default(), losses))
}

pub(crate) fn run<T: Task>(task: &T, mut model: T::Model, cfg: &TrainConfig, opts: &RunOptions) -> Result<RunOutcome<T::Model>> {
    if task.items().is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let config_text = cfg.to_toml();
    let dir = opts.out_dir.as_deref();
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let mut state;
    let mut best;
    if opts.resume {
        let d = dir.ok_or_else(|| Error::InvalidArgument("resume needs an output directory".into()))?;
        let path = d.join(STATE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        state = serde_json::from_str::<ResumeState>(&text).map_err(|e| Error::Malformed {
            offset: 0,
            reason: format!("{}: {e}", path.display()),
        })?;
        if state.config != config_text {
            return Err(Error::Config("resume config differs from the interrupted run".into()));
        }
        model = T::unwrap(load_checkpoint(&d.join(LAST_CHECKPOINT))?)?;
        best = T::unwrap(load_checkpoint(&d.join(BEST_CHECKPOINT))?)?;
        write_reports(&d.join(METRICS_FILE), &state.reports)?;
        log::info!("resuming after epoch {}", state.completed_epochs);
    } else {
        let initial_dev = task.evaluate(&model)?;
        let initial = initial_dev.error_rate.unwrap_or(initial_dev.loss);
        log::info!("initial dev metric {initial:.4}");
        state = ResumeState {
            config: config_text.clone(),
            completed_epochs: 0,
            adam: AdamState::new(&model, cfg.lr),
            best_metric: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
            initial_dev: initial,
            reports: Vec::new(),
        };
        best = model.clone();
        if let Some(d) = dir {
            write_reports(&d.join(METRICS_FILE), &[])?;
        }
    }

    let mut stopped_early = false;
    let mut halted = false;
    while state.completed_epochs < cfg.max_epochs {
        if state.bad_epochs > cfg.patience {
            stopped_early = true;
            break;
        }
        if opts.halt_after.is_some_and(|h| state.completed_epochs >= h) {
            halted = true;
            break;
        }
        let epoch = state.completed_epochs + 1;
        let started = Instant::now();
        let before = model.flat_values();
        let mut order: Vec<usize> = (0..task.items().len()).collect();
        order.shuffle(&mut crate::stream!(cfg.seed, "shuffle", epoch));
        let trainable = task.trainable(epoch);
        let mut loss_sum = 0.0;
        let mut masked_sum = 0.0;
        let mut steps = 0;
        for batch in order.chunks(cfg.batch_size) {
            let (grads, results) = batch_gradients(task, &model, batch, epoch)?;
            for r in &results {
                if !r.loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
                }
                loss_sum += r.loss;
                masked_sum += r.masked_fraction.unwrap_or(0.0);
            }
            model.zero_grad();
            model.add_flat_grads(&grads, 1.0 / batch.len() as f64);
            if cfg.grad_clip > 0.0 {
                clip_grad_norm(&mut model, cfg.grad_clip);
            }
            let filter = |name: &str| trainable.map_or(true, |f| f(name));
            adam_step(&mut model, &mut state.adam, cfg.precision, &filter)?;
            steps += 1;
        }
        let dev = task.evaluate(&model)?;
        let n = task.items().len();
        let report = EpochReport {
            stage: task.stage(),
            epoch,
            items: n,
            steps,
            train_loss: loss_sum / n as f64,
            dev_loss: dev.loss,
            dev_error_rate: dev.error_rate,
            masked_fraction: (task.stage() == config::Stage::Pretrain).then(|| masked_sum / n as f64),
            frozen: trainable.is_some(),
            param_change: group_norms(&before, &model),
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        if !report.dev_loss.is_finite() {
            return Err(Error::NonFinite(format!("dev loss at epoch {epoch}")));
        }
        let metric = report.selection_metric();
        log::info!(
            "{:?} epoch {epoch}: train {:.4} dev {:.4}{}",
            task.stage(),
            report.train_loss,
            report.dev_loss,
            dev.error_rate.map(|e| format!(" err {e:.2}%")).unwrap_or_default()
        );
        let improved = metric < state.best_metric;
        if improved {
            state.best_metric = metric;
            state.best_epoch = epoch;
            state.bad_epochs = 0;
            best = model.clone();
        } else {
            state.bad_epochs += 1;
        }
        state.completed_epochs = epoch;
        state.reports.push(report.clone());
        if let Some(d) = dir {
            append_report(&d.join(METRICS_FILE), &report)?;
            let seed = cfg.seed;
            if improved {
                save_checkpoint(
                    &d.join(BEST_CHECKPOINT),
                    &ModelCheckpoint::from_model(&T::wrap(&model), &config_text, seed, epoch as u32),
                )?;
            }
            save_checkpoint(
                &d.join(LAST_CHECKPOINT),
                &ModelCheckpoint::from_model(&T::wrap(&model), &config_text, seed, epoch as u32),
            )?;
            write_atomic(&d.join(STATE_FILE), serde_json::to_string(&state).expect("state serializes").as_bytes())?;
        }
    }
    if !halted && state.bad_epochs > cfg.patience {
        stopped_early = true;
    }
    Ok(RunOutcome {
        best,
        best_epoch: state.best_epoch,
        best_metric: state.best_metric,
        initial_dev: state.initial_dev,
        reports: state.reports,
        stopped_early,
    })
}

use super::config::Stage;
use super::data::{expand_speed, model_input, PretrainItem, Utterance};
use super::{run, DevResult, ItemResult, RunOptions, Task, TrainConfig};
use crate::augment::{sample_mask, Mask, MaskSpec};
use crate::error::{Error, Result};
use crate::losses::{masked_reconstruction_eval, masked_reconstruction_loss, LossWeights};
use crate::models::{init_parameters, Mode, Model, ModelCheckpoint, PretrainModel};
use crate::nn::Tensor;

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    /// Parameters from the epoch with the lowest dev reconstruction loss.
    pub model: PretrainModel,
    pub best_epoch: usize,
    pub best_dev_loss: f64,
    /// Dev loss of the initialized model, before any update.
    pub initial_dev_loss: f64,
    pub reports: Vec<super::EpochReport>,
    pub items_per_epoch: usize,
    pub stopped_early: bool,
}

struct Prepared {
    item_id: String,
    input: Tensor,
    dims: usize,
    frames: usize,
}

struct DevItem {
    input: Tensor,
    mask: Mask,
}

struct PretrainTask<'a> {
    cfg: &'a TrainConfig,
    spec: MaskSpec,
    weights: LossWeights,
    items: Vec<Prepared>,
    dev: Vec<DevItem>,
}

/// Mask sampled on the unstacked `D × T` grid, then stacked like the input.
fn stacked_mask(spec: &MaskSpec, dims: usize, frames: usize, stack: usize, id: &str, epoch: usize) -> Result<Mask> {
    let m = sample_mask(dims, frames, spec, &mut spec.stream(id, epoch as u64))?;
    m.stack(stack)
}

impl Task for PretrainTask<'_> {
    type Model = PretrainModel;
    type Item = Prepared;

    fn stage(&self) -> Stage {
        Stage::Pretrain
    }

    fn items(&self) -> &[Prepared] {
        &self.items
    }

    fn item_loss(&self, model: &mut PretrainModel, item: &Prepared, epoch: usize) -> Result<ItemResult> {
        let mask = stacked_mask(&self.spec, item.dims, item.frames, self.cfg.stack, &item.item_id, epoch)?;
        let mut rng = crate::stream!(self.cfg.seed, "dropout", epoch, &item.item_id);
        let mut mode = Mode::Train {
            dropout: self.cfg.pretrain_dropout,
            rng: &mut rng,
        };
        let out = masked_reconstruction_loss(model, &item.input, &mask, self.weights, &mut mode)?;
        Ok(ItemResult {
            loss: out.loss,
            masked_fraction: Some(mask.masked_fraction()),
        })
    }

    fn evaluate(&self, model: &PretrainModel) -> Result<DevResult> {
        let mut total = 0.0;
        for d in &self.dev {
            total += masked_reconstruction_eval(model, &d.input, &d.mask, self.weights)?.loss;
        }
        Ok(DevResult {
            loss: total / self.dev.len() as f64,
            error_rate: None,
        })
    }

    fn trainable(&self, _epoch: usize) -> Option<fn(&str) -> bool> {
        None
    }

    fn wrap(model: &PretrainModel) -> Model {
        Model::Pretrain(model.clone())
    }

    fn unwrap(checkpoint: ModelCheckpoint) -> Result<PretrainModel> {
        checkpoint.into_pretrain()
    }
}

/// Masked-reconstruction pretraining of encoder and reconstruction head.
///
/// Each epoch visits every utterance at original speed plus one copy per
/// speed factor, each with a freshly sampled mask. Dev masks are fixed for
/// the whole run so dev losses are comparable across epochs.
pub fn pretrain(train: &[Utterance], dev: &[Utterance], cfg: &TrainConfig, opts: &RunOptions) -> Result<PretrainOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyInput("pretraining manifest"));
    }
    if dev.is_empty() {
        return Err(Error::EmptyInput("pretraining dev manifest"));
    }
    if let Some(u) = train.iter().find(|u| dev.iter().any(|d| d.id() == u.id())) {
        return Err(Error::InvalidArgument(format!("utterance {} is in both train and dev", u.id())));
    }
    let spec = cfg.mask_spec();
    let items = expand_speed(train, &cfg.speed_factors)?
        .into_iter()
        .map(|PretrainItem { item_id, features, .. }| {
            Ok(Prepared {
                item_id,
                input: model_input(&features, cfg.stack)?,
                dims: features.dims(),
                frames: features.frames(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dev_spec = MaskSpec {
        seed: spec.seed ^ 0x6465_765f_6d61_736b,
        ..spec
    };
    let dev = dev
        .iter()
        .map(|u| {
            Ok(DevItem {
                input: model_input(&u.features, cfg.stack)?,
                mask: stacked_mask(&dev_spec, u.features.dims(), u.features.frames(), cfg.stack, u.id(), 0)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let task = PretrainTask {
        cfg,
        spec,
        weights: cfg.loss_weights(),
        items,
        dev,
    };
    let mut model = PretrainModel::new(&cfg.architecture())?;
    init_parameters(&mut model, cfg.init, &mut crate::stream!(cfg.seed, "init", "pretrain"));
    let items_per_epoch = task.items.len();
    let out = run(&task, model, cfg, opts)?;
    Ok(PretrainOutcome {
        model: out.best,
        best_epoch: out.best_epoch,
        best_dev_loss: out.best_metric,
        initial_dev_loss: out.initial_dev,
        reports: out.reports,
        items_per_epoch,
        stopped_early: out.stopped_early,
    })
}

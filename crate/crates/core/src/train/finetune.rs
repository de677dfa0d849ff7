use std::collections::BTreeSet;

use rand::RngCore;
use rayon::prelude::*;

use super::config::Stage;
use super::data::{model_input, Utterance};
use super::{run, DevResult, ItemResult, RunOptions, Task, TrainConfig};
use crate::augment::{apply_mask, sample_mask, MaskSpec};
use crate::decode::{beam_decode, score_corpus};
use crate::error::{Error, Result};
use crate::features::stack_frames;
use crate::losses::{ctc_loss, ctc_required_frames, LabelSequence, Vocabulary};
use crate::models::{init_parameters, strip_to_asr, AsrModel, Mode, Model, ModelCheckpoint, PretrainModel};
use crate::nn::Tensor;

/// Starting point for fine-tuning.
#[derive(Clone, Debug)]
pub enum FinetuneInit {
    /// Randomly initialized recognizer: the supervised baseline.
    Fresh,
    /// Recurrent layers taken from a pretrained encoder.
    Pretrained(PretrainModel),
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    /// Parameters from the epoch with the lowest dev error rate.
    pub model: AsrModel,
    pub initial: AsrModel,
    pub best_epoch: usize,
    pub best_error_rate: f64,
    pub reports: Vec<super::EpochReport>,
    pub stopped_early: bool,
}

/// Encode every transcript, listing all unknown tokens at once.
pub fn label_sequences(utts: &[Utterance], vocab: &Vocabulary) -> Result<Vec<LabelSequence>> {
    let mut unknown = BTreeSet::new();
    let mut out = Vec::with_capacity(utts.len());
    for u in utts {
        let text = u
            .record
            .transcript
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("utterance {} has no transcript", u.id())))?;
        match vocab.encode(text) {
            Ok(ids) => out.push(LabelSequence::new(u.id(), ids, vocab.len())?),
            Err(Error::UnknownTokens(t)) => unknown.extend(t),
            Err(e) => return Err(e),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownTokens(unknown.into_iter().collect()));
    }
    Ok(out)
}

struct Example {
    id: String,
    features: crate::features::Spectrogram,
    input: Tensor,
    labels: LabelSequence,
}

struct FinetuneTask<'a> {
    cfg: &'a TrainConfig,
    specaug: Option<MaskSpec>,
    train: Vec<Example>,
    dev: Vec<Example>,
}

fn lin_and_head(name: &str) -> bool {
    name.starts_with("lin.") || name.starts_with("ctc.")
}

impl Task for FinetuneTask<'_> {
    type Model = AsrModel;
    type Item = Example;

    fn stage(&self) -> Stage {
        Stage::Finetune
    }

    fn items(&self) -> &[Example] {
        &self.train
    }

    fn item_loss(&self, model: &mut AsrModel, ex: &Example, epoch: usize) -> Result<ItemResult> {
        let masked;
        let input = match &self.specaug {
            None => &ex.input,
            Some(spec) => {
                let f = &ex.features;
                let m = sample_mask(f.dims(), f.frames(), spec, &mut spec.stream(&ex.id, epoch as u64))?;
                masked = stack_frames(&apply_mask(f, &m)?, self.cfg.stack)?.to_tensor();
                &masked
            }
        };
        let mut rng = crate::stream!(self.cfg.seed, "dropout", epoch, &ex.id);
        let mut mode = Mode::Train {
            dropout: self.cfg.dropout,
            rng: &mut rng,
        };
        let (logits, cache) = model.forward(input, &mut mode)?;
        let out = ctc_loss(&logits, &ex.labels)?;
        model.backward(&cache, &out.grad)?;
        Ok(ItemResult {
            loss: out.loss,
            masked_fraction: None,
        })
    }

    fn evaluate(&self, model: &AsrModel) -> Result<DevResult> {
        let results: Vec<Result<(f64, Vec<usize>)>> = self
            .dev
            .par_iter()
            .map(|ex| {
                let logits = model.logits(&ex.input)?;
                let loss = ctc_loss(&logits, &ex.labels)?.loss;
                Ok((loss, beam_decode(&logits, self.cfg.beam)?.tokens))
            })
            .collect();
        let mut loss = 0.0;
        let mut pairs = Vec::with_capacity(self.dev.len());
        for (ex, r) in self.dev.iter().zip(results) {
            let (l, hyp) = r?;
            loss += l;
            pairs.push((ex.labels.labels().to_vec(), hyp));
        }
        Ok(DevResult {
            loss: loss / self.dev.len() as f64,
            error_rate: Some(score_corpus(&pairs)?.error_rate),
        })
    }

    fn trainable(&self, epoch: usize) -> Option<fn(&str) -> bool> {
        (self.cfg.lin_adapt && epoch <= self.cfg.lin_freeze_epochs).then_some(lin_and_head as fn(&str) -> bool)
    }

    fn wrap(model: &AsrModel) -> Model {
        Model::Asr(model.clone())
    }

    fn unwrap(checkpoint: ModelCheckpoint) -> Result<AsrModel> {
        checkpoint.into_asr()
    }
}

fn examples(utts: &[Utterance], vocab: &Vocabulary, stack: usize) -> Result<Vec<Example>> {
    let labels = label_sequences(utts, vocab)?;
    utts.iter()
        .zip(labels)
        .map(|(u, labels)| {
            let input = model_input(&u.features, stack)?;
            let required = ctc_required_frames(labels.labels());
            if input.rows() < required {
                return Err(Error::InfeasibleAlignment {
                    labels: labels.len(),
                    required,
                    frames: input.rows(),
                });
            }
            Ok(Example {
                id: u.id().to_string(),
                features: u.features.clone(),
                input,
                labels,
            })
        })
        .collect()
}

/// Build the model fine-tuning starts from.
pub fn initial_asr_model(init: &FinetuneInit, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<AsrModel> {
    let model = match init {
        FinetuneInit::Fresh => {
            if cfg.lin_adapt {
                return Err(Error::Config("LIN adaptation needs a pretrained model".into()));
            }
            let mut m = AsrModel::new(&cfg.architecture(), vocab)?;
            init_parameters(&mut m, cfg.init, &mut crate::stream!(cfg.seed, "init", "asr"));
            m
        }
        FinetuneInit::Pretrained(p) => {
            if p.input_dim() != cfg.architecture().input_dim {
                return Err(Error::Config(format!(
                    "pretrained model expects {}-dim input, config gives {}",
                    p.input_dim(),
                    cfg.architecture().input_dim
                )));
            }
            let m = strip_to_asr(&p.encoder, vocab, cfg.init, &mut crate::stream!(cfg.seed, "init", "ctc"))?;
            if cfg.lin_adapt {
                m.with_lin()
            } else {
                m
            }
        }
    };
    Ok(model)
}

/// CTC fine-tuning, selecting the epoch with the lowest dev error rate.
///
/// With `lin_adapt`, only the LIN adapter and CTC head are updated for the
/// first `lin_freeze_epochs` epochs.
pub fn finetune(
    train: &[Utterance],
    dev: &[Utterance],
    vocab: &Vocabulary,
    init: FinetuneInit,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<FinetuneOutcome> {
    if train.is_empty() {
        return Err(Error::EmptyInput("fine-tuning manifest"));
    }
    if dev.is_empty() {
        return Err(Error::EmptyInput("fine-tuning dev manifest"));
    }
    let model = initial_asr_model(&init, vocab, cfg)?;
    let specaug = cfg.specaug.then(|| MaskSpec {
        seed: crate::stream!(cfg.seed, "specaug").next_u64(),
        ..cfg.specaug_spec()
    });
    let task = FinetuneTask {
        cfg,
        specaug,
        train: examples(train, vocab, cfg.stack)?,
        dev: examples(dev, vocab, cfg.stack)?,
    };
    let out = run(&task, model.clone(), cfg, opts)?;
    Ok(FinetuneOutcome {
        model: out.best,
        initial: model,
        best_epoch: out.best_epoch,
        best_error_rate: out.best_metric,
        reports: out.reports,
        stopped_early: out.stopped_early,
    })
}

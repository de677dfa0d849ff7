//! Command-line front end.
//!
//! [`run`] parses arguments, executes one command and maps the outcome to
//! an exit code: 0 on success, 1 on a runtime failure, 2 on a usage or
//! configuration error. Every command writes `run.json` into its output
//! directory, and `replay` re-executes a recorded command and compares
//! artifact hashes.

mod manifest;
mod plot;
mod preview;

pub use manifest::{artifact_hash, hash_artifacts, DirLock, RunManifest, LOCK_FILE, RUN_MANIFEST};
pub use plot::{curves_csv, curves_svg, Curve};
pub use preview::{grid_csv, pgm, write_preview, PREVIEW_FILES};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::augment::MaskSpec;
use crate::decode::{beam_decode, format_hypotheses, parse_hypotheses, score_corpus, Hypothesis};
use crate::error::{Error, Result};
use crate::features::{read_feature_file, read_manifest};
use crate::losses::Vocabulary;
use crate::models::{load_checkpoint, ModelKind};
use crate::synth::{generate_corpus, SynthConfig, DEV_MANIFEST, TRAIN_MANIFEST, UNLABELED_DEV_MANIFEST, UNLABELED_MANIFEST, VOCAB_FILE};
use crate::train::{
    cache_key, cache_root, extract_features, finetune, grid_candidates, grid_search, load_features, model_input, pretrain,
    read_reports, write_feature_dir, FinetuneInit, FrontEnd, RunOptions, Stage, TrainConfig, Utterance, BEST_CHECKPOINT,
    LAST_CHECKPOINT, METRICS_FILE,
};

pub const HYPOTHESES_FILE: &str = "hyps.txt";
pub const SCORE_FILE: &str = "score.json";
pub const GRID_FILE: &str = "grid.json";
pub const CURVES_CSV: &str = "curves.csv";
pub const CURVES_SVG: &str = "curves.svg";
/// Feature cache directory created next to a manifest when
/// `MASKREC_CACHE` is unset.
pub const DEFAULT_CACHE_DIR: &str = ".maskrec-cache";

#[derive(Parser, Debug, Clone)]
#[command(name = "maskrec", version, about = "Masked-reconstruction pretraining and CTC fine-tuning for speech")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log more (-v debug, -vv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Generate a synthetic corpus: audio, manifests and vocabulary.
    Synth(SynthArgs),
    /// Extract normalized log-mel features for a manifest.
    Features(FeaturesArgs),
    /// Masked-reconstruction pretraining.
    Pretrain(PretrainArgs),
    /// CTC fine-tuning, from scratch or from a pretrained checkpoint.
    Finetune(FinetuneArgs),
    /// Beam-search decoding with a fine-tuned checkpoint.
    Decode(DecodeArgs),
    /// Token error rate of hypotheses against references.
    Score(ScoreArgs),
    /// Render a feature file, a sampled mask and the masked input.
    MaskPreview(MaskPreviewArgs),
    /// Learning curves from metrics logs.
    Plot(PlotArgs),
    /// Re-run a recorded command and compare its artifacts.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 500)]
    pub unlabeled: usize,
    #[arg(long, default_value_t = 50)]
    pub unlabeled_dev: usize,
    #[arg(long, default_value_t = 50)]
    pub labeled: usize,
    #[arg(long, default_value_t = 50)]
    pub labeled_dev: usize,
    /// Fraction of each token overlapping the next.
    #[arg(long, default_value_t = 0.0)]
    pub overlap: f64,
    /// Tokens allowed to follow each token (default: all).
    #[arg(long)]
    pub successors: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory (default: the feature cache).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run configuration supplying `n_mels` and `normalize`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Skip per-speaker mean normalization.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Args, Debug, Clone)]
pub struct PretrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue an interrupted run in `--out`.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many epochs, leaving a resumable state.
    #[arg(long, hide = true)]
    pub halt_after: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Pretraining checkpoint to take the recurrent layers from.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,
    /// Insert an identity-initialized input layer and train only it and the
    /// output layer for the first epochs.
    #[arg(long)]
    pub lin: bool,
    /// SpecAugment-style masking of fine-tuning inputs.
    #[arg(long)]
    pub specaug: bool,
    /// Beam width for dev decoding.
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub resume: bool,
    #[arg(long, hide = true)]
    pub halt_after: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct DecodeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Vocabulary (default: the one named in the checkpoint's config).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ScoreArgs {
    /// Reference: a labeled manifest or a hypotheses file.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct MaskPreviewArgs {
    /// Feature file written by `features`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub m_f: usize,
    #[arg(long, default_value_t = 8)]
    pub n_f: usize,
    #[arg(long, default_value_t = 2)]
    pub m_t: usize,
    #[arg(long, default_value_t = 16)]
    pub n_t: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PlotArgs {
    /// Metrics logs (`metrics.jsonl`).
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
    /// Curve labels, in log order (default: each log's directory name).
    #[arg(long = "label")]
    pub labels: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    /// `run.json`, or the directory holding it.
    pub run: PathBuf,
    /// Where to re-run (default: `<recorded out>.replay`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for an error: 2 for usage and configuration problems, 1 for
/// everything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::EmptyInput(_)
        | Error::UnknownTokens(_)
        | Error::InvalidVocabulary(_)
        | Error::UnknownInitScheme(_)
        | Error::WrongModelKind { .. } => 2,
        _ => 1,
    }
}

/// Parse `args` (program name first), execute, report, and return the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let raw: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let result = std::env::current_dir()
        .map_err(|e| Error::io(".", e))
        .and_then(|cwd| with_jobs(cli.jobs, || execute(&cli.command, &raw, &cwd)));
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(0) => Err(Error::InvalidArgument("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(f),
    }
}

/// What a command produced.
struct Outcome {
    config_path: Option<PathBuf>,
    config: Option<String>,
    seed: Option<u64>,
    /// Artifact paths relative to the output directory.
    artifacts: Vec<String>,
}

fn absolute(p: &Path, cwd: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        cwd.join(p)
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Features(_) => "features",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::Decode(_) => "decode",
            Command::Score(_) => "score",
            Command::MaskPreview(_) => "mask-preview",
            Command::Plot(_) => "plot",
            Command::Replay(_) => "replay",
        }
    }

    /// Every path argument, for resolving against a working directory.
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            Command::Synth(a) => vec![&mut a.out],
            Command::Features(a) => [Some(&mut a.manifest), a.out.as_mut(), a.config.as_mut()].into_iter().flatten().collect(),
            Command::Pretrain(a) => [Some(&mut a.out), a.config.as_mut()].into_iter().flatten().collect(),
            Command::Finetune(a) => [Some(&mut a.out), a.config.as_mut(), a.pretrained.as_mut()]
                .into_iter()
                .flatten()
                .collect(),
            Command::Decode(a) => [Some(&mut a.checkpoint), Some(&mut a.manifest), Some(&mut a.out), a.vocab.as_mut()]
                .into_iter()
                .flatten()
                .collect(),
            Command::Score(a) => vec![&mut a.reference, &mut a.hyp, &mut a.out],
            Command::MaskPreview(a) => vec![&mut a.features, &mut a.out],
            Command::Plot(a) => a.logs.iter_mut().chain(std::iter::once(&mut a.out)).collect(),
            Command::Replay(a) => [Some(&mut a.run), a.out.as_mut()].into_iter().flatten().collect(),
        }
    }

    fn resolved(&self, cwd: &Path) -> Self {
        let mut c = self.clone();
        for p in c.paths_mut() {
            *p = absolute(p, cwd);
        }
        c
    }
}

/// Execute one command with relative paths resolved against `cwd`, write
/// its run manifest, and return it. `raw_args` are recorded verbatim.
pub fn execute(command: &Command, raw_args: &[String], cwd: &Path) -> Result<RunManifest> {
    let command = command.resolved(cwd);
    if let Command::Replay(a) = &command {
        return replay(a);
    }
    let started = manifest::now();
    let out = match &command {
        Command::Features(a) => features_out_dir(a)?,
        Command::Synth(a) => a.out.clone(),
        Command::Pretrain(a) => a.out.clone(),
        Command::Finetune(a) => a.out.clone(),
        Command::Decode(a) => a.out.clone(),
        Command::Score(a) => a.out.clone(),
        Command::MaskPreview(a) => a.out.clone(),
        Command::Plot(a) => a.out.clone(),
        Command::Replay(_) => unreachable!("handled above"),
    };
    let _lock = DirLock::acquire(&out)?;
    let outcome = match &command {
        Command::Synth(a) => cmd_synth(a)?,
        Command::Features(a) => cmd_features(a, &out)?,
        Command::Pretrain(a) => cmd_pretrain(a)?,
        Command::Finetune(a) => cmd_finetune(a)?,
        Command::Decode(a) => cmd_decode(a)?,
        Command::Score(a) => cmd_score(a)?,
        Command::MaskPreview(a) => cmd_mask_preview(a)?,
        Command::Plot(a) => cmd_plot(a)?,
        Command::Replay(_) => unreachable!("handled above"),
    };
    let manifest = RunManifest {
        command: command.name().to_string(),
        args: raw_args.to_vec(),
        cwd: cwd.to_path_buf(),
        config_path: outcome.config_path,
        config: outcome.config,
        seed: outcome.seed,
        out_dir: out.clone(),
        started,
        finished: manifest::now(),
        artifacts: hash_artifacts(&out, &outcome.artifacts)?,
    };
    manifest.write(&out)?;
    Ok(manifest)
}

fn load_config(path: Option<&Path>, stage: Stage) -> Result<TrainConfig> {
    match path {
        Some(p) if !p.is_file() => Err(Error::Config(format!("config file {} not found", p.display()))),
        Some(p) => TrainConfig::load(p, stage),
        None => TrainConfig::from_toml_str("", stage, None),
    }
}

fn default_cache(manifest: &Path) -> PathBuf {
    cache_root(&manifest.parent().unwrap_or(Path::new(".")).join(DEFAULT_CACHE_DIR))
}

fn load_split(manifest: &Path, front: FrontEnd) -> Result<Vec<Utterance>> {
    let root = default_cache(manifest);
    load_features(manifest, front, Some(&root))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    if !path.is_file() {
        return Err(Error::Config(format!("vocabulary file {} not found", path.display())));
    }
    Vocabulary::read(path)
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome> {
    let cfg = SynthConfig {
        seed: a.seed,
        vocab_size: a.vocab_size,
        unlabeled: a.unlabeled,
        unlabeled_dev: a.unlabeled_dev,
        labeled: a.labeled,
        labeled_dev: a.labeled_dev,
        overlap: a.overlap,
        successors: a.successors.unwrap_or(a.vocab_size),
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&a.out, &cfg)?;
    println!("wrote synthetic corpus to {} (|V| = {})", corpus.dir.display(), corpus.vocab.len());
    Ok(Outcome {
        config_path: None,
        config: Some(format!("{cfg:?}")),
        seed: Some(a.seed),
        artifacts: [VOCAB_FILE, UNLABELED_MANIFEST, UNLABELED_DEV_MANIFEST, TRAIN_MANIFEST, DEV_MANIFEST, "wav"]
            .map(String::from)
            .to_vec(),
    })
}

fn front_end(a: &FeaturesArgs) -> Result<FrontEnd> {
    let cfg = load_config(a.config.as_deref(), Stage::Pretrain)?;
    Ok(FrontEnd {
        n_mels: cfg.n_mels,
        normalize: cfg.normalize && !a.no_normalize,
    })
}

fn features_out_dir(a: &FeaturesArgs) -> Result<PathBuf> {
    if let Some(out) = &a.out {
        return Ok(out.clone());
    }
    let records = read_manifest(&a.manifest)?;
    if records.is_empty() {
        return Err(Error::EmptyInput("manifest"));
    }
    Ok(default_cache(&a.manifest).join(cache_key(&records, front_end(a)?)?))
}

fn cmd_features(a: &FeaturesArgs, out: &Path) -> Result<Outcome> {
    let front = front_end(a)?;
    let records = read_manifest(&a.manifest)?;
    let utts = extract_features(&records, front)?;
    let files = write_feature_dir(out, &utts)?;
    println!("wrote {} feature files to {}", files.len(), out.display());
    Ok(Outcome {
        config_path: a.config.clone(),
        config: Some(format!("n_mels = {}\nnormalize = {}\n", front.n_mels, front.normalize)),
        seed: None,
        artifacts: files
            .iter()
            .map(|f| f.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
    })
}

fn run_options(out: &Path, resume: bool, halt_after: Option<usize>) -> RunOptions {
    RunOptions {
        out_dir: Some(out.to_path_buf()),
        resume,
        halt_after,
    }
}

fn training_artifacts() -> Vec<String> {
    [BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_FILE].map(String::from).to_vec()
}

fn cmd_pretrain(a: &PretrainArgs) -> Result<Outcome> {
    let mut cfg = load_config(a.config.as_deref(), Stage::Pretrain)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let front = FrontEnd {
        n_mels: cfg.n_mels,
        normalize: cfg.normalize,
    };
    let train = load_split(cfg.require_train_manifest()?, front)?;
    let dev = load_split(cfg.require_dev_manifest()?, front)?;
    let out = pretrain(&train, &dev, &cfg, &run_options(&a.out, a.resume, a.halt_after))?;
    println!(
        "pretrained {} epochs ({} items each); best dev loss {:.4} at epoch {} (initial {:.4})",
        out.reports.len(),
        out.items_per_epoch,
        out.best_dev_loss,
        out.best_epoch,
        out.initial_dev_loss
    );
    Ok(Outcome {
        config_path: a.config.clone(),
        config: Some(cfg.to_toml()),
        seed: Some(cfg.seed),
        artifacts: training_artifacts(),
    })
}

fn cmd_finetune(a: &FinetuneArgs) -> Result<Outcome> {
    let mut cfg = load_config(a.config.as_deref(), Stage::Finetune)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.beam {
        cfg.beam = b;
    }
    cfg.lin_adapt |= a.lin;
    cfg.specaug |= a.specaug;
    cfg.validate()?;
    if cfg.lin_adapt && a.pretrained.is_none() {
        return Err(Error::Config("--lin needs --pretrained: LIN adapts a pretrained network".into()));
    }
    let vocab = read_vocab(cfg.require_vocab()?)?;
    let init = match &a.pretrained {
        None => FinetuneInit::Fresh,
        Some(p) => FinetuneInit::Pretrained(load_checkpoint(p)?.into_pretrain()?),
    };
    let front = FrontEnd {
        n_mels: cfg.n_mels,
        normalize: cfg.normalize,
    };
    let train = load_split(cfg.require_train_manifest()?, front)?;
    let dev = load_split(cfg.require_dev_manifest()?, front)?;
    let mut artifacts = training_artifacts();

    if cfg.grid_search {
        if a.resume {
            return Err(Error::Config("--resume is not supported with grid search".into()));
        }
        let candidates = grid_candidates(&cfg);
        let mut index = 0;
        let report = grid_search(&candidates, cfg.grid_budget, |c| {
            let dir = a.out.join("grid").join(format!("{index:02}"));
            index += 1;
            let o = finetune(&train, &dev, &vocab, init.clone(), c, &RunOptions::in_dir(&dir))?;
            Ok(o.best_error_rate)
        })?;
        let pos = candidates.iter().position(|c| *c == report.best).expect("best is a candidate");
        let best_dir = a.out.join("grid").join(format!("{pos:02}"));
        for f in [BEST_CHECKPOINT, LAST_CHECKPOINT, METRICS_FILE] {
            fs::copy(best_dir.join(f), a.out.join(f)).map_err(|e| Error::io(best_dir.join(f), e))?;
        }
        let text = serde_json::to_string_pretty(&report.table).expect("grid serializes");
        manifest::write_atomic(&a.out.join(GRID_FILE), text.as_bytes())?;
        artifacts.push(GRID_FILE.into());
        println!("grid search: best lr {} dropout {}", report.best.lr, report.best.dropout);
    } else {
        let out = finetune(&train, &dev, &vocab, init, &cfg, &run_options(&a.out, a.resume, a.halt_after))?;
        println!(
            "fine-tuned {} epochs; best dev error rate {:.2}% at epoch {}",
            out.reports.len(),
            out.best_error_rate,
            out.best_epoch
        );
    }
    Ok(Outcome {
        config_path: a.config.clone(),
        config: Some(cfg.to_toml()),
        seed: Some(cfg.seed),
        artifacts,
    })
}

fn cmd_decode(a: &DecodeArgs) -> Result<Outcome> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if ckpt.kind != ModelKind::Asr {
        return Err(Error::InvalidArgument(format!("{}: checkpoint has no CTC head", a.checkpoint.display())));
    }
    let mut cfg = TrainConfig::from_toml_str(&ckpt.config, Stage::Finetune, None)?;
    if let Some(b) = a.beam {
        cfg.beam = b;
    }
    cfg.validate()?;
    let vocab_path = match &a.vocab {
        Some(v) => v.clone(),
        None => cfg.require_vocab()?.to_path_buf(),
    };
    let vocab = read_vocab(&vocab_path)?;
    let model = ckpt.into_asr()?;
    if model.vocab_size() != vocab.len() {
        return Err(Error::Config(format!(
            "checkpoint has {} output tokens, vocabulary has {}",
            model.vocab_size(),
            vocab.len()
        )));
    }
    let utts = load_split(
        &a.manifest,
        FrontEnd {
            n_mels: cfg.n_mels,
            normalize: cfg.normalize,
        },
    )?;
    let hyps = utts
        .par_iter()
        .map(|u| {
            let logits = model.logits(&model_input(&u.features, cfg.stack)?)?;
            let h = beam_decode(&logits, cfg.beam)?;
            let hyp = Hypothesis {
                utterance_id: u.id().to_string(),
                ..h
            };
            let text = vocab.decode(&hyp.tokens);
            Ok((hyp, text))
        })
        .collect::<Result<Vec<_>>>()?;
    manifest::write_atomic(&a.out.join(HYPOTHESES_FILE), format_hypotheses(&hyps).as_bytes())?;
    println!("decoded {} utterances with beam {}", hyps.len(), cfg.beam);
    Ok(Outcome {
        config_path: None,
        config: Some(cfg.to_toml()),
        seed: None,
        artifacts: vec![HYPOTHESES_FILE.into()],
    })
}

/// `(utterance_id, token text)` pairs from a hypotheses file or, failing
/// that, the transcripts of a manifest.
fn read_token_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(h) = parse_hypotheses(&text, path) {
        return Ok(h);
    }
    read_manifest(path)?
        .into_iter()
        .map(|r| match r.transcript {
            Some(t) => Ok((r.utterance_id, t)),
            None => Err(Error::InvalidArgument(format!("{}: {} has no transcript", path.display(), r.utterance_id))),
        })
        .collect()
}

fn cmd_score(a: &ScoreArgs) -> Result<Outcome> {
    let refs = read_token_file(&a.reference)?;
    let hyps: std::collections::HashMap<String, String> = read_token_file(&a.hyp)?.into_iter().collect();
    let missing: Vec<&str> = refs.iter().filter(|(id, _)| !hyps.contains_key(id)).map(|(id, _)| id.as_str()).collect();
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!("no hypothesis for {}", missing.join(", "))));
    }
    let pairs: Vec<(Vec<&str>, Vec<&str>)> = refs
        .iter()
        .map(|(id, r)| (r.split_whitespace().collect(), hyps[id].split_whitespace().collect()))
        .collect();
    let score = score_corpus(&pairs)?;
    let text = serde_json::to_string_pretty(&score).expect("score serializes");
    manifest::write_atomic(&a.out.join(SCORE_FILE), text.as_bytes())?;
    println!(
        "token error rate {:.2}% (S {} I {} D {}, {} reference tokens, {} utterances)",
        score.error_rate, score.substitutions, score.insertions, score.deletions, score.reference_tokens, score.utterances
    );
    Ok(Outcome {
        config_path: None,
        config: None,
        seed: None,
        artifacts: vec![SCORE_FILE.into()],
    })
}

fn cmd_mask_preview(a: &MaskPreviewArgs) -> Result<Outcome> {
    let features = read_feature_file(&a.features)?;
    let spec = MaskSpec {
        m_f: a.m_f,
        n_f: a.n_f,
        m_t: a.m_t,
        n_t: a.n_t,
        seed: a.seed,
    };
    let id = a.features.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let mask = write_preview(&features, &spec, &id, &a.out)?;
    println!(
        "{} x {} features, {:.1}% of cells masked",
        features.dims(),
        features.frames(),
        100.0 * mask.masked_fraction()
    );
    Ok(Outcome {
        config_path: None,
        config: Some(format!("{spec:?}")),
        seed: Some(a.seed),
        artifacts: PREVIEW_FILES.map(String::from).to_vec(),
    })
}

fn cmd_plot(a: &PlotArgs) -> Result<Outcome> {
    if !a.labels.is_empty() && a.labels.len() != a.logs.len() {
        return Err(Error::InvalidArgument(format!("{} labels for {} logs", a.labels.len(), a.logs.len())));
    }
    let curves = a
        .logs
        .iter()
        .enumerate()
        .map(|(i, log)| {
            let label = a.labels.get(i).cloned().unwrap_or_else(|| {
                log.parent()
                    .and_then(Path::file_name)
                    .or_else(|| log.file_stem())
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("log{i}"))
            });
            Ok(Curve {
                label,
                reports: read_reports(log)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    manifest::write_atomic(&a.out.join(CURVES_CSV), curves_csv(&curves).as_bytes())?;
    manifest::write_atomic(&a.out.join(CURVES_SVG), curves_svg(&curves).as_bytes())?;
    println!("plotted {} curve(s) to {}", curves.len(), a.out.join(CURVES_SVG).display());
    Ok(Outcome {
        config_path: None,
        config: None,
        seed: None,
        artifacts: vec![CURVES_CSV.into(), CURVES_SVG.into()],
    })
}

/// Re-run the command recorded in a run manifest with its configuration
/// snapshot, then compare artifact hashes.
fn replay(a: &ReplayArgs) -> Result<RunManifest> {
    let path = if a.run.is_dir() { a.run.join(RUN_MANIFEST) } else { a.run.clone() };
    let recorded = RunManifest::read(&path)?;
    let args = std::iter::once("maskrec".to_string()).chain(recorded.args.iter().cloned());
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(format!("recorded arguments do not parse: {e}")))?;
    let mut command = cli.command.resolved(&recorded.cwd);
    let out = a.out.clone().unwrap_or_else(|| {
        let mut s = recorded.out_dir.clone().into_os_string();
        s.push(".replay");
        PathBuf::from(s)
    });
    if out == recorded.out_dir {
        return Err(Error::InvalidArgument("replay output must differ from the recorded one".into()));
    }
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let snapshot = |config: &mut Option<PathBuf>| -> Result<()> {
        if let (Some(c), Some(text)) = (config.as_ref(), &recorded.config) {
            let p = out.join(c.file_name().map_or("config.toml".into(), |n| n.to_os_string()));
            let p = p.with_extension("snapshot.toml");
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            *config = Some(p);
        }
        Ok(())
    };
    match &mut command {
        Command::Synth(c) => c.out = out.clone(),
        Command::Features(c) => c.out = Some(out.clone()),
        Command::Pretrain(c) => {
            c.out = out.clone();
            c.resume = false;
            snapshot(&mut c.config)?;
        }
        Command::Finetune(c) => {
            c.out = out.clone();
            c.resume = false;
            snapshot(&mut c.config)?;
        }
        Command::Decode(c) => c.out = out.clone(),
        Command::Score(c) => c.out = out.clone(),
        Command::MaskPreview(c) => c.out = out.clone(),
        Command::Plot(c) => c.out = out.clone(),
        Command::Replay(_) => return Err(Error::InvalidArgument("cannot replay a replay".into())),
    }
    let fresh = with_jobs(cli.jobs, || execute(&command, &recorded.args, &recorded.cwd))?;
    let mut differing = Vec::new();
    for (name, hash) in &recorded.artifacts {
        match fresh.artifacts.get(name) {
            Some(h) if h == hash => {}
            Some(_) => differing.push(name.clone()),
            None => differing.push(format!("{name} (missing)")),
        }
    }
    if !differing.is_empty() {
        return Err(Error::ReplayMismatch(differing));
    }
    println!("replay of `{}` matches: {} artifact(s) identical", recorded.command, recorded.artifacts.len());
    Ok(fresh)
}

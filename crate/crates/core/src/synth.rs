//! Synthetic corpus: random token sequences rendered as audio.
//!
//! Each token owns a smooth spectral envelope (two bumps over a mel-spaced
//! grid of partials). Tokens come in pairs sharing the same bumps and
//! differing only in the direction one bump glides, so telling them apart
//! needs temporal context. Speakers shift and tilt the envelopes and speak
//! at different rates; every utterance gets white noise at a random SNR.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{write_manifest, write_wav, UtteranceRecord, Waveform};
use crate::losses::Vocabulary;
use crate::rng::StreamRng;

const PARTIALS: usize = 48;
const LOW_HZ: f64 = 150.0;
const HIGH_HZ: f64 = 7000.0;
/// Envelope control points per second.
const CONTROL_RATE: f64 = 200.0;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const UNLABELED_MANIFEST: &str = "unlabeled.tsv";
pub const UNLABELED_DEV_MANIFEST: &str = "unlabeled_dev.tsv";
pub const TRAIN_MANIFEST: &str = "train.tsv";
pub const DEV_MANIFEST: &str = "dev.tsv";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub vocab_size: usize,
    pub unlabeled: usize,
    pub unlabeled_dev: usize,
    pub labeled: usize,
    pub labeled_dev: usize,
    /// Speakers in the unlabeled pool. Labeled training speakers are the
    /// first `labeled_speakers` of them; dev speakers are unseen.
    pub pool_speakers: usize,
    pub labeled_speakers: usize,
    pub dev_speakers: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub sample_rate: u32,
    pub snr_db: (f64, f64),
    /// Fraction of each token overlapping the next; 0 leaves silent gaps.
    pub overlap: f64,
    /// Tokens that may follow each token; `vocab_size` means unconstrained.
    pub successors: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: 8,
            unlabeled: 500,
            unlabeled_dev: 50,
            labeled: 50,
            labeled_dev: 50,
            pool_speakers: 20,
            labeled_speakers: 4,
            dev_speakers: 4,
            min_tokens: 3,
            max_tokens: 6,
            sample_rate: 16000,
            snr_db: (5.0, 20.0),
            overlap: 0.0,
            successors: 8,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.vocab_size == 0 {
            return fail("vocab_size must be positive");
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return fail("need 0 < min_tokens <= max_tokens");
        }
        if self.pool_speakers == 0 || self.dev_speakers == 0 {
            return fail("speaker counts must be positive");
        }
        if self.labeled_speakers == 0 || self.labeled_speakers > self.pool_speakers {
            return fail("labeled_speakers must be in 1..=pool_speakers");
        }
        if !(self.snr_db.0 <= self.snr_db.1) {
            return fail("snr_db range is empty");
        }
        if !(0.0..0.5).contains(&self.overlap) {
            return fail("overlap must be in [0, 0.5)");
        }
        if self.successors == 0 || self.successors > self.vocab_size {
            return fail("successors must be in 1..=vocab_size");
        }
        if self.sample_rate != 16000 && self.sample_rate != 8000 {
            return fail("sample_rate must be 8000 or 16000");
        }
        Ok(())
    }
}

/// Paths of a generated corpus.
#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub dir: PathBuf,
    pub vocab: Vocabulary,
    pub vocab_path: PathBuf,
    pub unlabeled: PathBuf,
    pub unlabeled_dev: PathBuf,
    pub train: PathBuf,
    pub dev: PathBuf,
}

impl SynthCorpus {
    /// The corpus layout under `dir`, whether or not it exists yet.
    pub fn at(dir: &Path, vocab: Vocabulary) -> Self {
        Self {
            dir: dir.to_path_buf(),
            vocab,
            vocab_path: dir.join(VOCAB_FILE),
            unlabeled: dir.join(UNLABELED_MANIFEST),
            unlabeled_dev: dir.join(UNLABELED_DEV_MANIFEST),
            train: dir.join(TRAIN_MANIFEST),
            dev: dir.join(DEV_MANIFEST),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Bump {
    center: f64,
    width: f64,
    amp: f64,
}

/// Spectral envelope of one token; `glide` moves the second bump's centre
/// over the token's duration.
#[derive(Clone, Debug)]
struct Template {
    bumps: [Bump; 2],
    glide: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct Speaker {
    /// Envelope shift, in partials.
    pub shift: f64,
    /// Log-amplitude slope per partial.
    pub tilt: f64,
    /// Duration multiplier.
    pub rate: f64,
}

fn templates(seed: u64, vocab_size: usize) -> Vec<Template> {
    let mut rng = crate::stream!(seed, "synth", "templates");
    let mut out = Vec::with_capacity(vocab_size);
    while out.len() < vocab_size {
        let mut bump = |lo: f64, hi: f64| Bump {
            center: rng.gen_range(lo..hi),
            width: rng.gen_range(2.0..3.5),
            amp: rng.gen_range(0.6..1.0),
        };
        let bumps = [bump(4.0, 20.0), bump(20.0, 42.0)];
        for glide in [6.0, -6.0] {
            if out.len() < vocab_size {
                out.push(Template { bumps, glide });
            }
        }
    }
    out
}

/// Allowed successors of each token.
fn successor_lists(seed: u64, vocab_size: usize, successors: usize) -> Vec<Vec<usize>> {
    let mut rng = crate::stream!(seed, "synth", "successors");
    (0..vocab_size)
        .map(|_| rand::seq::index::sample(&mut rng, vocab_size, successors).into_vec())
        .collect()
}

fn speaker(seed: u64, index: usize) -> Speaker {
    let mut rng = crate::stream!(seed, "synth", "speaker", index);
    Speaker {
        shift: rng.gen_range(-2.5..2.5),
        tilt: rng.gen_range(-0.03..0.03),
        rate: rng.gen_range(0.8..1.25),
    }
}

fn partial_frequencies() -> [f64; PARTIALS] {
    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (lo, hi) = (mel(LOW_HZ), mel(HIGH_HZ));
    std::array::from_fn(|j| hz(lo + (hi - lo) * j as f64 / (PARTIALS - 1) as f64))
}

/// Amplitudes of every partial for token `t` at fraction `u` of its span.
/// Onset and offset are raised-cosine ramps over `fade` of the span.
fn envelope(t: &Template, spk: &Speaker, u: f64, fade: f64) -> [f64; PARTIALS] {
    let ramp = |x: f64| if x >= fade { 1.0 } else { 0.5 - 0.5 * (PI * x / fade).cos() };
    let gain = ramp(u).min(ramp(1.0 - u));
    std::array::from_fn(|j| {
        let x = j as f64;
        let mut a = 0.0;
        for (i, b) in t.bumps.iter().enumerate() {
            let c = b.center + spk.shift + if i == 1 { t.glide * (u - 0.5) } else { 0.0 };
            a += b.amp * (-(x - c).powi(2) / (2.0 * b.width * b.width)).exp();
        }
        gain * a * (spk.tilt * (x - PARTIALS as f64 / 2.0)).exp()
    })
}

/// Render a token sequence for a speaker. Deterministic given `rng`.
/// Neighbouring tokens cross-fade over `overlap` of their spans.
fn render(
    tokens: &[usize],
    templates: &[Template],
    spk: &Speaker,
    overlap: f64,
    snr_db: f64,
    sample_rate: u32,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let fade = overlap.max(0.2);
    let lead = rng.gen_range(8..24);
    let mut spans = Vec::with_capacity(tokens.len());
    let mut start = lead;
    for i in 0..tokens.len() {
        let steps = ((rng.gen_range(14.0..26.0) * spk.rate) as usize).max(4);
        spans.push((start, steps));
        start += ((1.0 - overlap) * steps as f64).round() as usize;
        if overlap == 0.0 && i + 1 < tokens.len() {
            start += rng.gen_range(0..6);
        }
    }
    let end = spans.last().map_or(lead, |&(s, n)| s + n);
    let trail = rng.gen_range(8..24);
    let mut control = vec![[0.0; PARTIALS]; end + trail];
    for (&tok, &(start, steps)) in tokens.iter().zip(&spans) {
        for s in 0..steps {
            let env = envelope(&templates[tok], spk, (s as f64 + 0.5) / steps as f64, fade);
            control[start + s].iter_mut().zip(env).for_each(|(c, e)| *c += e);
        }
    }

    let freqs = partial_frequencies();
    let sr = sample_rate as f64;
    let n = (control.len() as f64 * sr / CONTROL_RATE) as usize;
    let mut phase: [f64; PARTIALS] = std::array::from_fn(|_| rng.gen_range(0.0..2.0 * PI));
    let step: [f64; PARTIALS] = std::array::from_fn(|j| 2.0 * PI * freqs[j].min(0.45 * sr) / sr);
    let mut out = vec![0.0; n];
    for (i, y) in out.iter_mut().enumerate() {
        let pos = i as f64 * CONTROL_RATE / sr;
        let k = (pos as usize).min(control.len() - 1);
        let k1 = (k + 1).min(control.len() - 1);
        let w = pos - k as f64;
        let mut acc = 0.0;
        for j in 0..PARTIALS {
            let a = control[k][j] * (1.0 - w) + control[k1][j] * w;
            acc += a * phase[j].sin();
            phase[j] = (phase[j] + step[j]) % (2.0 * PI);
        }
        *y = acc;
    }

    let voiced: Vec<f64> = out.iter().copied().filter(|v| *v != 0.0).collect();
    let rms = (voiced.iter().map(|v| v * v).sum::<f64>() / voiced.len().max(1) as f64).sqrt();
    let scale = if rms > 0.0 { 0.1 / rms } else { 1.0 };
    let noise = Normal::new(0.0, 0.1 / 10f64.powf(snr_db / 20.0)).expect("finite std");
    for y in &mut out {
        *y = (*y * scale + noise.sample(rng)).clamp(-1.0, 1.0);
    }
    out
}

/// Token names `a`, `b`, ... for up to 26 tokens, `t0`, `t1`, ... beyond.
pub fn token_names(n: usize) -> Vec<String> {
    if n <= 26 {
        (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
    } else {
        (0..n).map(|i| format!("t{i}")).collect()
    }
}

struct Plan {
    id: String,
    speaker: usize,
    labeled: bool,
}

/// Write a corpus under `dir`: `wav/`, the vocabulary and four manifests.
pub fn generate_corpus(dir: &Path, cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let wav_dir = dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let vocab = Vocabulary::new(token_names(cfg.vocab_size))?;
    let corpus = SynthCorpus::at(dir, vocab.clone());
    let temps = templates(cfg.seed, cfg.vocab_size);
    let succ = successor_lists(cfg.seed, cfg.vocab_size, cfg.successors);
    let n_speakers = cfg.pool_speakers + cfg.dev_speakers;
    let speakers: Vec<Speaker> = (0..n_speakers).map(|i| speaker(cfg.seed, i)).collect();

    let split = |prefix: &str, count: usize, spk_lo: usize, spk_n: usize, labeled: bool| -> Vec<Plan> {
        (0..count)
            .map(|i| Plan {
                id: format!("{prefix}-{i:04}"),
                speaker: spk_lo + i % spk_n,
                labeled,
            })
            .collect()
    };
    let splits = [
        (corpus.unlabeled.clone(), split("unl", cfg.unlabeled, 0, cfg.pool_speakers, false)),
        (corpus.unlabeled_dev.clone(), split("unldev", cfg.unlabeled_dev, 0, cfg.pool_speakers, false)),
        (corpus.train.clone(), split("train", cfg.labeled, 0, cfg.labeled_speakers, true)),
        (corpus.dev.clone(), split("dev", cfg.labeled_dev, cfg.pool_speakers, cfg.dev_speakers, true)),
    ];

    for (manifest, plans) in &splits {
        let records = plans
            .par_iter()
            .map(|p| {
                let mut rng = crate::stream!(cfg.seed, "synth", "utterance", &p.id);
                let len = rng.gen_range(cfg.min_tokens..=cfg.max_tokens);
                let mut tokens = vec![rng.gen_range(0..cfg.vocab_size)];
                while tokens.len() < len {
                    let next = &succ[*tokens.last().expect("non-empty")];
                    tokens.push(next[rng.gen_range(0..next.len())]);
                }
                let snr = if cfg.snr_db.0 < cfg.snr_db.1 {
                    rng.gen_range(cfg.snr_db.0..cfg.snr_db.1)
                } else {
                    cfg.snr_db.0
                };
                let samples = render(&tokens, &temps, &speakers[p.speaker], cfg.overlap, snr, cfg.sample_rate, &mut rng);
                let spk = format!("spk{:02}", p.speaker);
                let rel = PathBuf::from("wav").join(format!("{}.wav", p.id));
                write_wav(&dir.join(&rel), &Waveform::new(samples, cfg.sample_rate, &p.id, &spk)?)?;
                let transcript = p.labeled.then(|| tokens.iter().map(|&t| vocab.token(t)).collect::<Vec<_>>().join(" "));
                Ok(UtteranceRecord {
                    utterance_id: p.id.clone(),
                    speaker_id: spk,
                    audio_path: rel,
                    transcript,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_manifest(manifest, &records)?;
    }
    vocab.write(&corpus.vocab_path)?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{read_manifest, read_wav};

    fn small() -> SynthConfig {
        SynthConfig {
            unlabeled: 6,
            unlabeled_dev: 2,
            labeled: 4,
            labeled_dev: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn layout_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let c = generate_corpus(dir.path(), &small()).unwrap();
        assert_eq!(Vocabulary::read(&c.vocab_path).unwrap().len(), 8);
        let unl = read_manifest(&c.unlabeled).unwrap();
        assert_eq!(unl.len(), 6);
        assert!(unl.iter().all(|r| r.transcript.is_none()));
        let train = read_manifest(&c.train).unwrap();
        assert_eq!(train.len(), 4);
        for r in &train {
            let n = r.tokens().len();
            assert!((3..=6).contains(&n));
            let w = read_wav(&r.audio_path, &r.utterance_id, &r.speaker_id).unwrap();
            assert_eq!(w.sample_rate(), 16000);
        }
        let dev = read_manifest(&c.dev).unwrap();
        assert!(dev.iter().all(|d| train.iter().all(|t| t.speaker_id != d.speaker_id)));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_corpus(a.path(), &small()).unwrap();
        generate_corpus(b.path(), &small()).unwrap();
        for f in ["train.tsv", "wav/train-0002.wav", "wav/unl-0005.wav"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }

    #[test]
    fn paired_tokens_share_bumps() {
        let t = templates(3, 8);
        assert_eq!(t[0].bumps[0].center, t[1].bumps[0].center);
        assert_eq!(t[0].glide, -t[1].glide);
        assert_ne!(t[0].bumps[0].center, t[2].bumps[0].center);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad = SynthConfig {
            min_tokens: 5,
            max_tokens: 2,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_corpus(Path::new("/nonexistent"), &bad), Err(Error::Config(_))));
    }
}

//! Flat TOML run configuration.
//!
//! Every key is optional; missing keys take stage defaults. `preset = "full"`
//! switches the architecture defaults to the full-size model. Relative paths
//! resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::MaskSpec;
use crate::error::{Error, Result};
use crate::losses::{LossRegion, LossWeights};
use crate::models::{Architecture, InitScheme};
use crate::nn::Precision;

/// Dropout values allowed when grid search is on.
pub const DROPOUT_GRID: [f64; 4] = [0.0, 0.1, 0.2, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    pub preset: Preset,
    pub seed: u64,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,

    pub n_mels: usize,
    pub stack: usize,
    pub normalize: bool,

    pub hidden: usize,
    pub layers: usize,
    pub feature_dim: usize,
    pub recon_hidden: usize,
    pub recon_layers: usize,
    pub init: InitScheme,
    pub precision: Precision,

    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    /// Fine-tuning dropout.
    pub dropout: f64,
    pub pretrain_dropout: f64,

    pub m_f: usize,
    pub n_f: usize,
    pub m_t: usize,
    pub n_t: usize,
    pub speed_factors: Vec<f64>,
    pub loss_per_cell: bool,
    /// With a mask spec that never masks, reconstruct every cell instead.
    pub autoencoder_all_cells: bool,

    pub lin_adapt: bool,
    pub lin_freeze_epochs: usize,
    pub specaug: bool,
    pub specaug_m_f: usize,
    pub specaug_n_f: usize,
    pub specaug_m_t: usize,
    pub specaug_n_t: usize,
    pub beam: usize,

    pub grid_search: bool,
    pub lr_grid: Vec<f64>,
    pub dropout_grid: Vec<f64>,
    /// Maximum number of grid candidates trained.
    pub grid_budget: usize,
}

impl TrainConfig {
    pub fn defaults(stage: Stage, preset: Preset) -> Self {
        let arch = match preset {
            Preset::Desk => Architecture::desk(),
            Preset::Full => Architecture::full(),
        };
        let mask = MaskSpec::default();
        Self {
            stage,
            preset,
            seed: 0,
            train_manifest: None,
            dev_manifest: None,
            vocab: None,
            n_mels: 40,
            stack: 3,
            normalize: true,
            hidden: arch.hidden,
            layers: arch.layers,
            feature_dim: arch.feature_dim,
            recon_hidden: arch.recon_hidden,
            recon_layers: arch.recon_layers,
            init: InitScheme::UniformFan,
            precision: Precision::Train32,
            lr: 1e-3,
            batch_size: match stage {
                Stage::Pretrain => 128,
                Stage::Finetune => 4,
            },
            max_epochs: match stage {
                Stage::Pretrain => 15,
                Stage::Finetune => 50,
            },
            patience: 5,
            grad_clip: 0.0,
            dropout: 0.0,
            pretrain_dropout: 0.0,
            m_f: mask.m_f,
            n_f: mask.n_f,
            m_t: mask.m_t,
            n_t: mask.n_t,
            speed_factors: vec![0.9, 1.1],
            loss_per_cell: false,
            autoencoder_all_cells: true,
            lin_adapt: false,
            lin_freeze_epochs: 5,
            specaug: false,
            specaug_m_f: mask.m_f,
            specaug_n_f: mask.n_f,
            specaug_m_t: mask.m_t,
            specaug_n_t: mask.n_t,
            beam: crate::decode::DEFAULT_BEAM,
            grid_search: false,
            lr_grid: vec![1e-4, 3e-4, 1e-3, 3e-3],
            dropout_grid: DROPOUT_GRID.to_vec(),
            grid_budget: 16,
        }
    }

    /// Overlay `text` on the stage defaults. Paths resolve against `base`.
    pub fn from_toml_str(text: &str, stage: Stage, base: Option<&Path>) -> Result<Self> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        let preset = match user.get("preset") {
            None => Preset::Desk,
            Some(v) => v
                .clone()
                .try_into()
                .map_err(|_| Error::Config(format!("unknown preset {v}; expected \"desk\" or \"full\"")))?,
        };
        let defaults = Self::defaults(stage, preset);
        let mut merged = toml::Table::try_from(&defaults).map_err(|e| Error::Config(e.to_string()))?;
        for (k, v) in user {
            if k != "stage" && k != "preset" && !merged.contains_key(&k) && !Self::OPTIONAL_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            merged.insert(k, v);
        }
        // the caller decides the stage
        merged.insert("stage".into(), toml::Value::try_from(stage).expect("enum serializes"));
        let mut cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        if let Some(base) = base {
            for p in [&mut cfg.train_manifest, &mut cfg.dev_manifest, &mut cfg.vocab].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    const OPTIONAL_KEYS: [&'static str; 3] = ["train_manifest", "dev_manifest", "vocab"];

    pub fn load(path: &Path, stage: Stage) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, stage, path.parent())
    }

    /// Canonical text: every key, stable order. Reparsing yields `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let positive = [
            ("n_mels", self.n_mels),
            ("stack", self.stack),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("feature_dim", self.feature_dim),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("beam", self.beam),
        ];
        for (k, v) in positive {
            if v == 0 {
                return fail(format!("`{k}` must be positive"));
            }
        }
        if self.recon_layers > 0 && self.recon_hidden == 0 {
            return fail("`recon_hidden` must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return fail(format!("`lr` must be positive, got {}", self.lr));
        }
        for (k, v) in [("dropout", self.dropout), ("pretrain_dropout", self.pretrain_dropout)] {
            if !(0.0..1.0).contains(&v) {
                return fail(format!("`{k}` must be in [0, 1), got {v}"));
            }
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return fail("`grad_clip` must be non-negative".into());
        }
        if let Some(f) = self.speed_factors.iter().find(|f| !(f.is_finite() && **f > 0.0)) {
            return fail(format!("speed factor {f} must be positive"));
        }
        if self.grid_search {
            if let Some(d) = self.dropout_grid.iter().find(|d| !DROPOUT_GRID.contains(d)) {
                return fail(format!("dropout {d} is not in the grid {DROPOUT_GRID:?}"));
            }
            if self.lr_grid.is_empty() || self.lr_grid.iter().any(|l| !(*l > 0.0)) {
                return fail("`lr_grid` must hold positive values".into());
            }
            if self.grid_budget == 0 {
                return fail("`grid_budget` must be positive".into());
            }
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.n_mels * self.stack,
            hidden: self.hidden,
            layers: self.layers,
            feature_dim: self.feature_dim,
            recon_hidden: self.recon_hidden,
            recon_layers: self.recon_layers,
        }
    }

    pub fn mask_spec(&self) -> MaskSpec {
        MaskSpec {
            m_f: self.m_f,
            n_f: self.n_f,
            m_t: self.m_t,
            n_t: self.n_t,
            seed: self.seed,
        }
    }

    pub fn specaug_spec(&self) -> MaskSpec {
        MaskSpec {
            m_f: self.specaug_m_f,
            n_f: self.specaug_n_f,
            m_t: self.specaug_m_t,
            n_t: self.specaug_n_t,
            seed: self.seed,
        }
    }

    /// Loss region and scaling used during pretraining.
    pub fn loss_weights(&self) -> LossWeights {
        let region = if self.autoencoder_all_cells && self.mask_spec().is_empty() {
            LossRegion::AllCells
        } else {
            LossRegion::MaskedCells
        };
        LossWeights {
            region,
            per_cell: self.loss_per_cell,
        }
    }

    pub fn require_train_manifest(&self) -> Result<&Path> {
        self.train_manifest
            .as_deref()
            .ok_or_else(|| Error::Config("`train_manifest` is required".into()))
    }

    pub fn require_dev_manifest(&self) -> Result<&Path> {
        self.dev_manifest
            .as_deref()
            .ok_or_else(|| Error::Config("`dev_manifest` is required".into()))
    }

    pub fn require_vocab(&self) -> Result<&Path> {
        self.vocab.as_deref().ok_or_else(|| Error::Config("`vocab` is required".into()))
    }
}

//! Checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic           8 bytes  "MASKRECK"
//! format_version  u32
//! model kind      u8       0 = pretrain, 1 = asr
//! config length   u32, then that many bytes of UTF-8 config text
//! seed            u64
//! epoch           u32
//! param count     u32
//! per parameter:
//!   name length   u32, then the UTF-8 name
//!   rank          u32
//!   dims          rank × u32
//!   values        product(dims) × f32, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{AsrModel, CtcHead, Encoder, LinAdapter, PretrainModel, ReconHead, RecurrentStack};
use crate::error::{Error, Result};
use crate::nn::{BiLstmLayer, Linear, LstmDirection, Module, Parameter, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MASKRECK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Pretrain,
    Asr,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Pretrain => "pretrain",
            ModelKind::Asr => "asr",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Pretrain(PretrainModel),
    Asr(AsrModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Pretrain(_) => ModelKind::Pretrain,
            Model::Asr(_) => ModelKind::Asr,
        }
    }
}

/// Serializable snapshot of a model plus run metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub kind: ModelKind,
    /// Canonical text of the configuration that produced the model.
    pub config: String,
    pub seed: u64,
    pub epoch: u32,
    pub params: Vec<(String, Tensor)>,
}

impl ModelCheckpoint {
    pub fn from_model(model: &Model, config: impl Into<String>, seed: u64, epoch: u32) -> Self {
        let mut params = Vec::new();
        let mut collect = |p: &Parameter| params.push((p.name.clone(), p.value.clone()));
        match model {
            Model::Pretrain(m) => m.visit_params(&mut collect),
            Model::Asr(m) => m.visit_params(&mut collect),
        }
        Self {
            kind: model.kind(),
            config: config.into(),
            seed,
            epoch,
            params,
        }
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Number of bidirectional recurrent layers stored.
    pub fn recurrent_layers(&self) -> usize {
        let mut n = 0;
        while self.param(&format!("encoder.lstm{n}.fwd.w_ih")).is_some() {
            n += 1;
        }
        n
    }

    pub fn to_model(&self) -> Result<Model> {
        let mut table = ParamTable::new(&self.params)?;
        let model = match self.kind {
            ModelKind::Pretrain => {
                let stack = table.stack()?;
                let projection = table.linear("encoder.projection")?;
                let mut hidden = Vec::new();
                while table.has(&format!("recon.hidden{}.weight", hidden.len())) {
                    hidden.push(table.linear(&format!("recon.hidden{}", hidden.len()))?);
                }
                let output = table.linear("recon.output")?;
                Model::Pretrain(PretrainModel {
                    encoder: Encoder { stack, projection },
                    recon: ReconHead { hidden, output },
                })
            }
            ModelKind::Asr => {
                let lin = if table.has("lin.weight") {
                    Some(LinAdapter {
                        linear: table.linear("lin")?,
                    })
                } else {
                    None
                };
                let stack = table.stack()?;
                let head = CtcHead {
                    linear: table.linear("ctc")?,
                };
                Model::Asr(AsrModel { lin, stack, head })
            }
        };
        table.finish()?;
        Ok(model)
    }

    pub fn into_pretrain(self) -> Result<PretrainModel> {
        match self.checked(ModelKind::Pretrain)?.to_model()? {
            Model::Pretrain(m) => Ok(m),
            Model::Asr(_) => unreachable!(),
        }
    }

    pub fn into_asr(self) -> Result<AsrModel> {
        match self.checked(ModelKind::Asr)?.to_model()? {
            Model::Asr(m) => Ok(m),
            Model::Pretrain(_) => unreachable!(),
        }
    }

    fn checked(self, expected: ModelKind) -> Result<Self> {
        if self.kind != expected {
            return Err(Error::WrongModelKind {
                expected: expected.name(),
                found: self.kind.name(),
            });
        }
        Ok(self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match self.kind {
            ModelKind::Pretrain => 0,
            ModelKind::Asr => 1,
        });
        out.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(r.malformed(0, "bad magic"));
        }
        let version = r.u32("format version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let kind_at = r.pos;
        let kind = match r.take(1, "model kind")?[0] {
            0 => ModelKind::Pretrain,
            1 => ModelKind::Asr,
            _ => return Err(r.malformed(kind_at, "unknown model kind")),
        };
        let config = r.string("config")?;
        let seed = u64::from_le_bytes(r.take(8, "seed")?.try_into().unwrap());
        let epoch = r.u32("epoch")?;
        let count = r.u32("parameter count")?;
        let mut params = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = r.string("parameter name")?;
            let rank = r.u32("rank")? as usize;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<_>>()?;
            let n: usize = dims.iter().product();
            let at = r.pos;
            let raw = r.take(4 * n, "parameter values")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            let t = Tensor::new(dims, data).map_err(|e| r.malformed(at, &e.to_string()))?;
            params.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(r.malformed(r.pos, "trailing bytes"));
        }
        Ok(Self {
            kind,
            config,
            seed,
            epoch,
            params,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn malformed(&self, offset: usize, reason: &str) -> Error {
        Error::Malformed {
            offset: offset as u64,
            reason: reason.to_string(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.malformed(self.bytes.len(), &format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let at = self.pos;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.malformed(at, &format!("{what} is not UTF-8")))
    }
}

/// Named tensors consumed while rebuilding a model; leftovers are an error.
struct ParamTable {
    params: BTreeMap<String, Tensor>,
}

impl ParamTable {
    fn new(params: &[(String, Tensor)]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, t) in params {
            if map.insert(name.clone(), t.clone()).is_some() {
                return Err(Error::Malformed {
                    offset: 0,
                    reason: format!("duplicate parameter `{name}`"),
                });
            }
        }
        Ok(Self { params: map })
    }

    fn has(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    fn param(&mut self, name: &str) -> Result<Parameter> {
        self.params
            .remove(name)
            .map(|t| Parameter::from_value(name, t))
            .ok_or_else(|| Error::Malformed {
                offset: 0,
                reason: format!("missing parameter `{name}`"),
            })
    }

    fn linear(&mut self, prefix: &str) -> Result<Linear> {
        Linear::from_parts(self.param(&format!("{prefix}.weight"))?, self.param(&format!("{prefix}.bias"))?)
    }

    fn direction(&mut self, prefix: &str, reverse: bool) -> Result<LstmDirection> {
        let d = LstmDirection {
            w_ih: self.param(&format!("{prefix}.w_ih"))?,
            w_hh: self.param(&format!("{prefix}.w_hh"))?,
            bias: self.param(&format!("{prefix}.bias"))?,
            reverse,
        };
        let (a, h) = (d.input_dim(), d.hidden());
        if d.w_ih.value.shape() != [a, 4 * h] || d.w_hh.value.shape() != [h, 4 * h] || d.bias.value.shape() != [4 * h] {
            return Err(Error::shape("checkpoint lstm", &[a, 4 * h], d.w_ih.value.shape()));
        }
        Ok(d)
    }

    fn stack(&mut self) -> Result<RecurrentStack> {
        let mut layers = Vec::new();
        while self.has(&format!("encoder.lstm{}.fwd.w_ih", layers.len())) {
            let prefix = format!("encoder.lstm{}", layers.len());
            layers.push(BiLstmLayer {
                fwd: self.direction(&format!("{prefix}.fwd"), false)?,
                bwd: self.direction(&format!("{prefix}.bwd"), true)?,
            });
        }
        if layers.is_empty() {
            return Err(Error::Malformed {
                offset: 0,
                reason: "no recurrent layers".into(),
            });
        }
        Ok(RecurrentStack { layers })
    }

    fn finish(self) -> Result<()> {
        match self.params.keys().next() {
            None => Ok(()),
            Some(name) => Err(Error::Malformed {
                offset: 0,
                reason: format!("unexpected parameter `{name}`"),
            }),
        }
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &ModelCheckpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, checkpoint.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelCheckpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::Vocabulary;
    use crate::models::{init_parameters, Architecture, InitScheme};

    fn small() -> PretrainModel {
        let arch = Architecture {
            input_dim: 6,
            hidden: 3,
            layers: 2,
            feature_dim: 2,
            recon_hidden: 4,
            recon_layers: 2,
        };
        let mut m = PretrainModel::new(&arch).unwrap();
        init_parameters(&mut m, InitScheme::UniformFan, &mut crate::stream!(1, "init"));
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = Model::Pretrain(small());
        let ck = ModelCheckpoint::from_model(&m, "lr = 0.001\n", 7, 3);
        let bytes = ck.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_model().unwrap(), m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn asr_round_trip_with_lin() {
        let vocab = Vocabulary::new(["a", "b"]).unwrap();
        let asr = crate::models::strip_to_asr(&small().encoder, &vocab, InitScheme::UniformFan, &mut crate::stream!(2, "ctc"))
            .unwrap()
            .with_lin();
        let ck = ModelCheckpoint::from_model(&Model::Asr(asr.clone()), "", 0, 0);
        assert_eq!(ModelCheckpoint::from_bytes(&ck.to_bytes()).unwrap().into_asr().unwrap(), asr);
    }

    #[test]
    fn wrong_kind_is_typed() {
        let ck = ModelCheckpoint::from_model(&Model::Pretrain(small()), "", 0, 0);
        assert!(matches!(
            ck.into_asr(),
            Err(Error::WrongModelKind {
                expected: "asr",
                found: "pretrain"
            })
        ));
    }

    #[test]
    fn version_and_truncation_errors() {
        let bytes = ModelCheckpoint::from_model(&Model::Pretrain(small()), "cfg", 0, 0).to_bytes();
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bad),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        match ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 3]) {
            Err(Error::Malformed { offset, reason }) => {
                assert_eq!(offset as usize, bytes.len() - 3);
                assert!(reason.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
    }
}

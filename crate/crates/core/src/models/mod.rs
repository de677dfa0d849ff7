//! The encoder `f`, reconstruction head `g`, LIN adapter and CTC head, plus
//! parameter initialization and checkpoint I/O.
//!
//! Parameter names are stable and double as checkpoint keys:
//!
//! | group              | names                                    |
//! |--------------------|------------------------------------------|
//! | recurrent layers   | `encoder.lstm{i}.{fwd,bwd}.{w_ih,w_hh,bias}` |
//! | encoder projection | `encoder.projection.{weight,bias}`       |
//! | reconstruction     | `recon.hidden{i}.*`, `recon.output.*`    |
//! | LIN adapter        | `lin.{weight,bias}`                      |
//! | CTC head           | `ctc.{weight,bias}`                      |

mod checkpoint;
mod init;

pub use checkpoint::{load_checkpoint, save_checkpoint, Model, ModelCheckpoint, ModelKind, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use init::{init_parameters, InitScheme, Initialize};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::Vocabulary;
use crate::nn::{dropout, relu, relu_backward, BiLstmCache, BiLstmLayer, DropoutMask, Linear, Module, Parameter, Tensor};
use crate::rng::StreamRng;

/// Whether a forward pass is training (dropout active) or inference.
pub enum Mode<'a> {
    Eval,
    Train { dropout: f64, rng: &'a mut StreamRng },
}

impl Mode<'_> {
    fn dropout(&mut self, x: Tensor) -> Result<(Tensor, DropoutMask)> {
        match self {
            Mode::Eval => Ok((x, DropoutMask::identity())),
            Mode::Train { dropout: rate, rng } => dropout(&x, *rate, *rng, true),
        }
    }
}

/// Layer sizes of the encoder and heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// Model input dim, i.e. mel bins × stacking factor.
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub feature_dim: usize,
    pub recon_hidden: usize,
    pub recon_layers: usize,
}

impl Architecture {
    /// Sizes used for desk-scale runs.
    pub fn desk() -> Self {
        Self {
            input_dim: 120,
            hidden: 64,
            layers: 2,
            feature_dim: 32,
            recon_hidden: 128,
            recon_layers: 2,
        }
    }

    /// Full-size model: 4 × 512 bidirectional LSTM, 128-d features,
    /// two 1024-unit ReLU layers in the reconstruction head.
    pub fn full() -> Self {
        Self {
            input_dim: 120,
            hidden: 512,
            layers: 4,
            feature_dim: 128,
            recon_hidden: 1024,
            recon_layers: 2,
        }
    }
}

/// Stack of bidirectional LSTM layers with dropout on each layer's output.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentStack {
    pub layers: Vec<BiLstmLayer>,
}

#[derive(Clone, Debug)]
pub struct StackCache {
    layers: Vec<(BiLstmCache, DropoutMask)>,
}

impl RecurrentStack {
    pub fn new(input_dim: usize, hidden: usize, layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument("at least one recurrent layer is required".into()));
        }
        let layers = (0..layers)
            .map(|i| BiLstmLayer::new(&format!("encoder.lstm{i}"), if i == 0 { input_dim } else { 2 * hidden }, hidden))
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, StackCache)> {
        x.expect_cols("recurrent stack input", self.input_dim())?;
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(&h)?;
            let (out, mask) = mode.dropout(out)?;
            caches.push((cache, mask));
            h = out;
        }
        Ok((h, StackCache { layers: caches }))
    }

    pub fn backward(&mut self, cache: &StackCache, dout: &Tensor) -> Result<Tensor> {
        let mut g = dout.clone();
        for (layer, (c, mask)) in self.layers.iter_mut().zip(&cache.layers).rev() {
            g = layer.backward(c, &mask.backward(&g))?;
        }
        Ok(g)
    }
}

impl Module for RecurrentStack {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        self.layers.iter().for_each(|l| l.visit_params(f));
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.layers.iter_mut().for_each(|l| l.visit_params_mut(f));
    }
}

/// The encoder `f`: recurrent layers followed by a linear projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub stack: RecurrentStack,
    pub projection: Linear,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    stack: StackCache,
    top: Tensor,
}

impl Encoder {
    pub fn new(arch: &Architecture) -> Result<Self> {
        let stack = RecurrentStack::new(arch.input_dim, arch.hidden, arch.layers)?;
        let projection = Linear::new("encoder.projection", stack.output_dim(), arch.feature_dim);
        Ok(Self { stack, projection })
    }

    pub fn input_dim(&self) -> usize {
        self.stack.input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.projection.output_dim()
    }

    /// Per-frame features, `T × feature_dim`.
    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, EncoderCache)> {
        let (top, stack) = self.stack.forward(x, mode)?;
        let feats = self.projection.forward(&top)?;
        Ok((feats, EncoderCache { stack, top }))
    }

    pub fn backward(&mut self, cache: &EncoderCache, dfeats: &Tensor) -> Result<Tensor> {
        let dtop = self.projection.backward(&cache.top, dfeats)?;
        self.stack.backward(&cache.stack, &dtop)
    }
}

impl Module for Encoder {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        self.stack.visit_params(f);
        self.projection.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.stack.visit_params_mut(f);
        self.projection.visit_params_mut(f);
    }
}

/// The reconstruction network `g`: ReLU hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconHead {
    pub hidden: Vec<Linear>,
    pub output: Linear,
}

#[derive(Clone, Debug)]
pub struct ReconCache {
    inputs: Vec<Tensor>,
    pre: Vec<Tensor>,
    masks: Vec<DropoutMask>,
}

impl ReconHead {
    pub fn new(arch: &Architecture) -> Self {
        let hidden = (0..arch.recon_layers)
            .map(|i| {
                let input = if i == 0 { arch.feature_dim } else { arch.recon_hidden };
                Linear::new(&format!("recon.hidden{i}"), input, arch.recon_hidden)
            })
            .collect();
        let last = if arch.recon_layers == 0 { arch.feature_dim } else { arch.recon_hidden };
        Self {
            hidden,
            output: Linear::new("recon.output", last, arch.input_dim),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    pub fn forward(&self, feats: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, ReconCache)> {
        let mut cache = ReconCache {
            inputs: Vec::new(),
            pre: Vec::new(),
            masks: Vec::new(),
        };
        let mut h = feats.clone();
        for layer in &self.hidden {
            let pre = layer.forward(&h)?;
            let mut act = pre.clone();
            act.data_mut().iter_mut().for_each(|v| *v = relu(*v));
            let (act, mask) = mode.dropout(act)?;
            cache.inputs.push(h);
            cache.pre.push(pre);
            cache.masks.push(mask);
            h = act;
        }
        let out = self.output.forward(&h)?;
        cache.inputs.push(h);
        Ok((out, cache))
    }

    pub fn backward(&mut self, cache: &ReconCache, dout: &Tensor) -> Result<Tensor> {
        let n = self.hidden.len();
        let mut g = self.output.backward(&cache.inputs[n], dout)?;
        for i in (0..n).rev() {
            let mut dpre = cache.masks[i].backward(&g);
            for (d, p) in dpre.data_mut().iter_mut().zip(cache.pre[i].data()) {
                *d = relu_backward(*p, *d);
            }
            g = self.hidden[i].backward(&cache.inputs[i], &dpre)?;
        }
        Ok(g)
    }
}

impl Module for ReconHead {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        self.hidden.iter().for_each(|l| l.visit_params(f));
        self.output.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.hidden.iter_mut().for_each(|l| l.visit_params_mut(f));
        self.output.visit_params_mut(f);
    }
}

/// Encoder plus reconstruction head, trained by masked reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainModel {
    pub encoder: Encoder,
    pub recon: ReconHead,
}

#[derive(Clone, Debug)]
pub struct PretrainCache {
    encoder: EncoderCache,
    recon: ReconCache,
}

impl PretrainModel {
    /// Zero-initialized; see [`init_parameters`].
    pub fn new(arch: &Architecture) -> Result<Self> {
        Ok(Self {
            encoder: Encoder::new(arch)?,
            recon: ReconHead::new(arch),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.input_dim(),
            hidden: self.encoder.stack.layers[0].hidden(),
            layers: self.encoder.stack.layers.len(),
            feature_dim: self.encoder.feature_dim(),
            recon_hidden: self.recon.hidden.first().map_or(0, |l| l.output_dim()),
            recon_layers: self.recon.hidden.len(),
        }
    }

    /// `g(f(x))`, `T × input_dim`.
    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, PretrainCache)> {
        let (feats, encoder) = self.encoder.forward(x, mode)?;
        let (out, recon) = self.recon.forward(&feats, mode)?;
        Ok((out, PretrainCache { encoder, recon }))
    }

    pub fn backward(&mut self, cache: &PretrainCache, dout: &Tensor) -> Result<Tensor> {
        let dfeats = self.recon.backward(&cache.recon, dout)?;
        self.encoder.backward(&cache.encoder, &dfeats)
    }
}

impl Module for PretrainModel {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        self.encoder.visit_params(f);
        self.recon.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.encoder.visit_params_mut(f);
        self.recon.visit_params_mut(f);
    }
}

/// Square linear layer in front of the recurrent stack, identity at
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LinAdapter {
    pub linear: Linear,
}

impl LinAdapter {
    pub fn identity(dim: usize) -> Self {
        let mut linear = Linear::new("lin", dim, dim);
        for i in 0..dim {
            linear.weight.value.set(i, i, 1.0);
        }
        Self { linear }
    }

    pub fn dim(&self) -> usize {
        self.linear.input_dim()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.linear.forward(x)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        self.linear.backward(x, dy)
    }
}

impl Module for LinAdapter {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        self.linear.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.linear.visit_params_mut(f);
    }
}

/// Linear map from the top recurrent output to `|V| + 1` logits, blank last.
#[derive(Clone, Debug, PartialEq)]
pub struct CtcHead {
    pub linear: Linear,
}

impl CtcHead {
    pub fn new(input: usize, vocab: &Vocabulary) -> Self {
        Self {
            linear: Linear::new("ctc", input, vocab.output_dim()),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.linear.output_dim()
    }
}

impl Module for CtcHead {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        self.linear.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.linear.visit_params_mut(f);
    }
}

/// Recognizer: optional LIN, recurrent stack, CTC head.
#[derive(Clone, Debug, PartialEq)]
pub struct AsrModel {
    pub lin: Option<LinAdapter>,
    pub stack: RecurrentStack,
    pub head: CtcHead,
}

#[derive(Clone, Debug)]
pub struct AsrCache {
    input: Tensor,
    stack: StackCache,
    top: Tensor,
}

impl AsrModel {
    /// Zero-initialized recognizer trained from scratch.
    pub fn new(arch: &Architecture, vocab: &Vocabulary) -> Result<Self> {
        let stack = RecurrentStack::new(arch.input_dim, arch.hidden, arch.layers)?;
        let head = CtcHead::new(stack.output_dim(), vocab);
        Ok(Self { lin: None, stack, head })
    }

    pub fn input_dim(&self) -> usize {
        self.stack.input_dim()
    }

    /// Number of non-blank tokens.
    pub fn vocab_size(&self) -> usize {
        self.head.output_dim() - 1
    }

    pub fn with_lin(mut self) -> Self {
        self.lin = Some(LinAdapter::identity(self.input_dim()));
        self
    }

    /// Logits `T × (|V| + 1)`.
    pub fn forward(&self, x: &Tensor, mode: &mut Mode<'_>) -> Result<(Tensor, AsrCache)> {
        x.expect_cols("asr input", self.input_dim())?;
        let lin_out = match &self.lin {
            Some(lin) => Some(lin.forward(x)?),
            None => None,
        };
        let (top, stack) = self.stack.forward(lin_out.as_ref().unwrap_or(x), mode)?;
        let logits = self.head.linear.forward(&top)?;
        Ok((
            logits,
            AsrCache {
                input: x.clone(),
                stack,
                top,
            },
        ))
    }

    pub fn backward(&mut self, cache: &AsrCache, dlogits: &Tensor) -> Result<Tensor> {
        let dtop = self.head.linear.backward(&cache.top, dlogits)?;
        let dx = self.stack.backward(&cache.stack, &dtop)?;
        match &mut self.lin {
            Some(lin) => lin.backward(&cache.input, &dx),
            None => Ok(dx),
        }
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, &mut Mode::Eval)?.0)
    }
}

impl Module for AsrModel {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        if let Some(lin) = &self.lin {
            lin.visit_params(f);
        }
        self.stack.visit_params(f);
        self.head.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        if let Some(lin) = &mut self.lin {
            lin.visit_params_mut(f);
        }
        self.stack.visit_params_mut(f);
        self.head.visit_params_mut(f);
    }
}

/// Keep the recurrent layers of a pretrained encoder and attach a freshly
/// initialized CTC head. The projection and reconstruction head are dropped.
pub fn strip_to_asr(
    pretrained: &Encoder,
    vocab: &Vocabulary,
    scheme: InitScheme,
    rng: &mut StreamRng,
) -> Result<AsrModel> {
    if vocab.is_empty() {
        return Err(Error::InvalidVocabulary("vocabulary is empty".into()));
    }
    let stack = pretrained.stack.clone();
    let mut head = CtcHead::new(stack.output_dim(), vocab);
    head.initialize(scheme, rng);
    Ok(AsrModel { lin: None, stack, head })
}

/// Coarse grouping of a parameter name, used for change reporting.
pub fn param_group(name: &str) -> &'static str {
    if name.starts_with("encoder.lstm") {
        "recurrent"
    } else if name.starts_with("encoder.projection") {
        "projection"
    } else if name.starts_with("recon.") {
        "recon"
    } else if name.starts_with("lin.") {
        "lin"
    } else if name.starts_with("ctc.") {
        "ctc"
    } else {
        "other"
    }
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::nn::grad_check;

    fn tiny() -> Architecture {
        Architecture {
            input_dim: 4,
            hidden: 3,
            layers: 2,
            feature_dim: 2,
            recon_hidden: 5,
            recon_layers: 2,
        }
    }

    fn random_pretrain(seed: u64) -> PretrainModel {
        let mut m = PretrainModel::new(&tiny()).unwrap();
        init_parameters(&mut m, InitScheme::UniformFan, &mut crate::stream!(seed, "init"));
        m
    }

    #[test]
    fn zero_model_outputs_projection_bias() {
        let mut m = PretrainModel::new(&tiny()).unwrap();
        init_parameters(&mut m, InitScheme::Zeros, &mut crate::stream!(0, "init"));
        m.encoder.projection.bias.value.data_mut().copy_from_slice(&[0.25, -1.5]);
        let x = Tensor::from_fn(5, 4, |r, c| (r * c) as f64 - 1.0);
        let (feats, _) = m.encoder.forward(&x, &mut Mode::Eval).unwrap();
        for t in 0..5 {
            assert_eq!(feats.row(t), &[0.25, -1.5]);
        }
    }

    #[test]
    fn default_sizes() {
        let full = Architecture::full();
        assert_eq!(full.feature_dim, 128);
        assert_eq!(full.hidden, 512);
        assert_eq!(full.layers, 4);
        let g = ReconHead::new(&full);
        let widths: Vec<usize> = g.hidden.iter().map(|l| l.output_dim()).collect();
        assert_eq!(widths, vec![1024, 1024]);
        assert_eq!(g.output_dim(), full.input_dim);
    }

    #[test]
    fn zero_recon_head_outputs_bias() {
        let mut g = ReconHead::new(&tiny());
        g.output.bias.value.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let (out, _) = g.forward(&Tensor::from_fn(3, 2, |r, c| (r + c) as f64), &mut Mode::Eval).unwrap();
        assert_eq!(out.shape(), &[3, 4]);
        for t in 0..3 {
            assert_eq!(out.row(t), &[1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn input_dim_mismatch_is_an_error() {
        let m = random_pretrain(1);
        assert!(m.forward(&Tensor::zeros(&[3, 5]), &mut Mode::Eval).is_err());
        assert!(m.recon.forward(&Tensor::zeros(&[3, 3]), &mut Mode::Eval).is_err());
    }

    #[test]
    fn future_frames_influence_present_output() {
        let m = random_pretrain(2);
        let mut rng = crate::stream!(5, "x");
        let x = Tensor::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let (base, _) = m.encoder.forward(&x, &mut Mode::Eval).unwrap();
        let mut x2 = x.clone();
        x2.set(4, 1, x.get(4, 1) + 0.5);
        let (pert, _) = m.encoder.forward(&x2, &mut Mode::Eval).unwrap();
        assert!(base.row(1).iter().zip(pert.row(1)).any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn dropout_only_in_training() {
        let m = random_pretrain(3);
        let x = Tensor::from_fn(4, 4, |r, c| (r as f64 - c as f64) * 0.3);
        let (a, _) = m.forward(&x, &mut Mode::Eval).unwrap();
        let (b, _) = m.forward(&x, &mut Mode::Eval).unwrap();
        assert_eq!(a, b);
        let mut rng = crate::stream!(1, "d");
        let (c, _) = m.forward(&x, &mut Mode::Train { dropout: 0.5, rng: &mut rng }).unwrap();
        assert_ne!(a, c);
        let mut rng = crate::stream!(1, "d");
        let (d, _) = m.forward(&x, &mut Mode::Train { dropout: 0.0, rng: &mut rng }).unwrap();
        assert_eq!(a, d);
    }

    #[test]
    fn strip_keeps_recurrent_weights_only() {
        let m = random_pretrain(4);
        let vocab = Vocabulary::new(["a", "b", "c"]).unwrap();
        let asr = strip_to_asr(&m.encoder, &vocab, InitScheme::UniformFan, &mut crate::stream!(9, "ctc")).unwrap();
        assert_eq!(asr.stack, m.encoder.stack);
        assert_eq!(asr.head.output_dim(), 4);
        for name in asr.param_names() {
            assert!(!name.contains("projection") && !name.starts_with("recon"), "{name}");
        }
    }

    #[test]
    fn fresh_lin_is_exact_identity() {
        let lin = LinAdapter::identity(4);
        let mut rng = crate::stream!(3, "x");
        let x = Tensor::from_fn(7, 4, |_, _| rng.gen_range(-1e3..1e3));
        assert_eq!(lin.forward(&x).unwrap(), x);
        let mut double = LinAdapter::identity(4);
        double.linear.weight.value.data_mut().iter_mut().for_each(|w| *w *= 2.0);
        let y = double.forward(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn pretrain_gradient_check() {
        let mut m = random_pretrain(6);
        let mut rng = crate::stream!(6, "x");
        let x = Tensor::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let init = m.flat_values();
        let report = grad_check(
            |v| {
                m.set_flat_values(v);
                m.zero_grad();
                let (out, cache) = m.forward(&x, &mut Mode::Eval).unwrap();
                let loss: f64 = out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
                m.backward(&cache, &w).unwrap();
                (loss, m.flat_grads())
            },
            &init,
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }
}

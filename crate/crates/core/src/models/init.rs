use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AsrModel, CtcHead, Encoder, LinAdapter, PretrainModel, ReconHead, RecurrentStack};
use crate::error::Error;
use crate::nn::{Linear, LstmDirection, Parameter};
use crate::rng::StreamRng;

/// Forget-gate bias applied by every scheme.
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`; biases zero.
    UniformFan,
    Zeros,
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "uniform-fan" => Ok(Self::UniformFan),
            "zeros" => Ok(Self::Zeros),
            other => Err(Error::UnknownInitScheme(other.to_string())),
        }
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UniformFan => "uniform-fan",
            Self::Zeros => "zeros",
        })
    }
}

/// Values are drawn as `f32` so a fresh model round-trips exactly through
/// a checkpoint.
fn fill_weight(p: &mut Parameter, scheme: InitScheme, rng: &mut StreamRng) {
    let shape = p.value.shape().to_vec();
    let exact = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
    let mut bound = exact as f32;
    if bound as f64 > exact {
        bound = bound.next_down();
    }
    for v in p.value.data_mut() {
        *v = match scheme {
            InitScheme::UniformFan => rng.gen_range(-bound..bound) as f64,
            InitScheme::Zeros => 0.0,
        };
    }
}

pub trait Initialize {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng);
}

impl Initialize for Linear {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        fill_weight(&mut self.weight, scheme, rng);
        self.bias.value.fill(0.0);
    }
}

impl Initialize for LstmDirection {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        fill_weight(&mut self.w_ih, scheme, rng);
        fill_weight(&mut self.w_hh, scheme, rng);
        self.bias.value.fill(0.0);
        self.forget_bias_mut().fill(FORGET_BIAS);
    }
}

impl Initialize for RecurrentStack {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        for layer in &mut self.layers {
            layer.fwd.initialize(scheme, rng);
            layer.bwd.initialize(scheme, rng);
        }
    }
}

impl Initialize for Encoder {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        self.stack.initialize(scheme, rng);
        self.projection.initialize(scheme, rng);
    }
}

impl Initialize for ReconHead {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        for l in &mut self.hidden {
            l.initialize(scheme, rng);
        }
        self.output.initialize(scheme, rng);
    }
}

impl Initialize for PretrainModel {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        self.encoder.initialize(scheme, rng);
        self.recon.initialize(scheme, rng);
    }
}

impl Initialize for CtcHead {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        self.linear.initialize(scheme, rng);
    }
}

/// The adapter is always reset to the identity.
impl Initialize for LinAdapter {
    fn initialize(&mut self, _scheme: InitScheme, _rng: &mut StreamRng) {
        *self = LinAdapter::identity(self.dim());
    }
}

impl Initialize for AsrModel {
    fn initialize(&mut self, scheme: InitScheme, rng: &mut StreamRng) {
        if let Some(lin) = &mut self.lin {
            lin.initialize(scheme, rng);
        }
        self.stack.initialize(scheme, rng);
        self.head.initialize(scheme, rng);
    }
}

/// Initialize every parameter of `model` in visit order.
pub fn init_parameters<M: Initialize + ?Sized>(model: &mut M, scheme: InitScheme, rng: &mut StreamRng) {
    model.initialize(scheme, rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Architecture;
    use crate::nn::Module;

    fn arch() -> Architecture {
        Architecture {
            input_dim: 6,
            hidden: 4,
            layers: 2,
            feature_dim: 3,
            recon_hidden: 8,
            recon_layers: 2,
        }
    }

    #[test]
    fn zeros_except_forget_bias() {
        let mut m = PretrainModel::new(&arch()).unwrap();
        init_parameters(&mut m, InitScheme::Zeros, &mut crate::stream!(1, "init"));
        m.visit_params(&mut |p| {
            let lstm_bias = p.name.starts_with("encoder.lstm") && p.name.ends_with(".bias");
            for (i, &v) in p.value.data().iter().enumerate() {
                let expected = if lstm_bias && (4..8).contains(&i) { 1.0 } else { 0.0 };
                assert_eq!(v, expected, "{}[{i}]", p.name);
            }
        });
    }

    #[test]
    fn deterministic_given_seed() {
        let mut a = PretrainModel::new(&arch()).unwrap();
        let mut b = PretrainModel::new(&arch()).unwrap();
        init_parameters(&mut a, InitScheme::UniformFan, &mut crate::stream!(5, "init"));
        init_parameters(&mut b, InitScheme::UniformFan, &mut crate::stream!(5, "init"));
        let (va, vb) = (a.flat_values(), b.flat_values());
        assert!(va.iter().zip(&vb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn uniform_fan_bounds() {
        let mut m = PretrainModel::new(&arch()).unwrap();
        init_parameters(&mut m, InitScheme::UniformFan, &mut crate::stream!(2, "init"));
        m.visit_params(&mut |p| {
            let shape = p.value.shape();
            if shape.len() == 2 {
                let bound = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let max = p.value.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(max <= bound, "{}: {max} > {bound}", p.name);
                assert!(max > 0.0);
            }
        });
    }

    #[test]
    fn unknown_scheme_is_rejected() {
        assert!(matches!("he-normal".parse::<InitScheme>(), Err(Error::UnknownInitScheme(_))));
        assert_eq!("uniform-fan".parse::<InitScheme>().unwrap(), InitScheme::UniformFan);
    }
}

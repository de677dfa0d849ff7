use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Scale factors applied by one dropout call: `0` for dropped entries,
/// `1/(1-rate)` for survivors. `None` when dropout was the identity.
#[derive(Clone, Debug, Default)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        Self(None)
    }

    pub fn backward(&self, dy: &Tensor) -> Tensor {
        match &self.0 {
            None => dy.clone(),
            Some(scale) => {
                let mut dx = dy.clone();
                for (g, s) in dx.data_mut().iter_mut().zip(scale) {
                    *g *= s;
                }
                dx
            }
        }
    }
}

/// Inverted dropout. Identity when `rate == 0` or `training == false`.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor, DropoutMask)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), DropoutMask::identity()));
    }
    let keep = 1.0 / (1.0 - rate);
    let scale: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, s) in y.data_mut().iter_mut().zip(&scale) {
        *v *= s;
    }
    Ok((y, DropoutMask(Some(scale))))
}

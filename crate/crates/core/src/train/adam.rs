use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Module, Parameter, Precision};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments for every parameter tensor, in visit order.
///
/// Step counts are kept per tensor so that a tensor that was frozen for a
/// while starts with proper bias correction once it is released.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Optimizer calls so far.
    pub t: u64,
    pub steps: Vec<u64>,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<M: Module + ?Sized>(model: &M, lr: f64) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |p| m.push(vec![0.0; p.value.len()]));
        Self {
            lr,
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            t: 0,
            steps: vec![0; m.len()],
            v: m.clone(),
            m,
        }
    }
}

/// One Adam update of every parameter for which `trainable(name)` holds,
/// using the gradients accumulated in the model. Values are rounded per
/// `precision` afterwards. A non-finite gradient aborts before anything is
/// modified.
pub fn adam_step<M: Module + ?Sized>(
    model: &mut M,
    state: &mut AdamState,
    precision: Precision,
    trainable: &dyn Fn(&str) -> bool,
) -> Result<()> {
    let mut bad = None;
    let mut count = 0;
    model.visit_params(&mut |p: &Parameter| {
        count += 1;
        if bad.is_none() && !p.grad.is_finite() {
            bad = Some(p.name.clone());
        }
    });
    if let Some(name) = bad {
        return Err(Error::NonFiniteGradient(name));
    }
    if count != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "optimizer state has {} tensors, model has {count}",
            state.m.len()
        )));
    }
    state.t += 1;
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.eps, state.lr);
    let mut i = 0;
    let mut shape_err = None;
    model.visit_params_mut(&mut |p| {
        let idx = i;
        i += 1;
        if !trainable(&p.name) {
            return;
        }
        let (m, v) = (&mut state.m[idx], &mut state.v[idx]);
        if m.len() != p.value.len() {
            shape_err.get_or_insert_with(|| p.name.clone());
            return;
        }
        state.steps[idx] += 1;
        let t = state.steps[idx] as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        for (((w, &g), mj), vj) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mj = b1 * *mj + (1.0 - b1) * g;
            *vj = b2 * *vj + (1.0 - b2) * g * g;
            let m_hat = *mj / c1;
            let v_hat = *vj / c2;
            *w = precision.round(*w - lr * m_hat / (v_hat.sqrt() + eps));
        }
    });
    match shape_err {
        Some(name) => Err(Error::InvalidArgument(format!("optimizer state shape mismatch for `{name}`"))),
        None => Ok(()),
    }
}

/// Scale gradients so their global L2 norm is at most `max_norm`. Returns
/// the norm before clipping.
pub fn clip_grad_norm<M: Module + ?Sized>(model: &mut M, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    model.visit_params(&mut |p| sq += p.grad.data().iter().map(|g| g * g).sum::<f64>());
    let norm = sq.sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        model.visit_params_mut(&mut |p| p.grad.data_mut().iter_mut().for_each(|g| *g *= s));
    }
    norm
}

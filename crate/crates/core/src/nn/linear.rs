use super::ops::{matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::{Module, Parameter, Tensor};
use crate::error::{Error, Result};

/// Affine map `y = xW + b` applied to each row of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    /// Zero-initialized layer; parameters are named `{prefix}.weight` and
    /// `{prefix}.bias`.
    pub fn new(prefix: &str, input: usize, output: usize) -> Self {
        Self {
            weight: Parameter::zeros(format!("{prefix}.weight"), &[input, output]),
            bias: Parameter::zeros(format!("{prefix}.bias"), &[output]),
        }
    }

    pub fn from_parts(weight: Parameter, bias: Parameter) -> Result<Self> {
        let w = weight.value.shape();
        if w.len() != 2 || bias.value.shape() != [w[1]] {
            return Err(Error::shape("linear", w, bias.value.shape()));
        }
        Ok(Self { weight, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.input_dim(), self.output_dim());
        x.expect_cols("linear forward", a)?;
        let t = x.rows();
        let mut out = Vec::with_capacity(t * b);
        for _ in 0..t {
            out.extend_from_slice(self.bias.value.data());
        }
        matmul_acc(x.data(), self.weight.value.data(), &mut out, t, a, b);
        Tensor::matrix(t, b, out)
    }

    /// Accumulate parameter gradients for upstream `dy` and return `dx`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Result<Tensor> {
        let (a, b) = (self.input_dim(), self.output_dim());
        x.expect_cols("linear backward input", a)?;
        dy.expect_cols("linear backward grad", b)?;
        let t = x.rows();
        if dy.rows() != t {
            return Err(Error::shape("linear backward", &[t, b], dy.shape()));
        }
        matmul_at_acc(x.data(), dy.data(), self.weight.grad.data_mut(), t, a, b);
        let bias_grad = self.bias.grad.data_mut();
        for row in dy.data().chunks_exact(b) {
            for (g, d) in bias_grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; t * a];
        matmul_bt_acc(dy.data(), self.weight.value.data(), &mut dx, t, b, a);
        Tensor::matrix(t, a, dx)
    }
}

impl Module for Linear {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::grad_check;

    #[test]
    fn identity_weight_passes_input_through() {
        let mut l = Linear::new("l", 3, 3);
        for i in 0..3 {
            l.weight.value.set(i, i, 1.0);
        }
        let x = Tensor::from_fn(4, 3, |r, c| (r * 3 + c) as f64 - 2.5);
        assert_eq!(l.forward(&x).unwrap(), x);
    }

    #[test]
    fn scalar_chain_rule() {
        let mut l = Linear::new("l", 1, 1);
        l.weight.value.data_mut()[0] = 3.0;
        l.bias.value.data_mut()[0] = 1.0;
        let x = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().data(), &[7.0]);
        let dx = l.backward(&x, &Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(l.weight.grad.data(), &[2.0]);
        assert_eq!(l.bias.grad.data(), &[1.0]);
        assert_eq!(dx.data(), &[3.0]);
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = Linear::new("l", 4, 2);
        l.weight.value.data_mut().iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        l.bias.value.data_mut().iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        let x = Tensor::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        let y = l.forward(&x).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = l.bias.value.data()[j];
                for k in 0..4 {
                    acc += x.get(i, k) * l.weight.value.get(k, j);
                }
                assert!((y.get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wrong_input_width_is_an_error() {
        let l = Linear::new("l", 4, 2);
        assert!(l.forward(&Tensor::zeros(&[3, 5])).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut l = Linear::new("l", 3, 2);
        let init: Vec<f64> = (0..l.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let target = Tensor::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let report = grad_check(
            |p| {
                l.set_flat_values(p);
                l.zero_grad();
                let y = l.forward(&x).unwrap();
                let diff: Vec<f64> = y.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
                let loss = 0.5 * diff.iter().map(|d| d * d).sum::<f64>();
                l.backward(&x, &Tensor::matrix(5, 2, diff).unwrap()).unwrap();
                (loss, l.flat_grads())
            },
            &init,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }
}

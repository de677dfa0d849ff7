use super::ops::{matmul_acc, matmul_at_acc, matmul_bt_acc, sigmoid};
use super::{Module, Parameter, Tensor};
use crate::error::{Error, Result};

/// One direction of an LSTM layer.
///
/// Pre-activations are `z = x·W_ih + h_prev·W_hh + b`, with the `4H` columns
/// laid out as input gate, forget gate, cell candidate, output gate.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmDirection {
    pub w_ih: Parameter,
    pub w_hh: Parameter,
    pub bias: Parameter,
    pub reverse: bool,
}

/// Everything a single cell step needs for its backward pass.
#[derive(Clone, Debug)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Activated gates `[i | f | g | o]`.
    pub gates: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// Activations of a whole sequence in one direction, indexed by frame.
#[derive(Clone, Debug)]
pub struct DirectionCache {
    x: Tensor,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn activate(z: &mut [f64], hidden: usize) {
    for (j, v) in z.iter_mut().enumerate() {
        *v = if (2 * hidden..3 * hidden).contains(&j) { v.tanh() } else { sigmoid(*v) };
    }
}

/// Returns `(c, tanh c, h)`.
fn cell_update(gates: &[f64], c_prev: &[f64], hidden: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (i, rest) = gates.split_at(hidden);
    let (f, rest) = rest.split_at(hidden);
    let (g, o) = rest.split_at(hidden);
    let mut c = vec![0.0; hidden];
    let mut tc = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for k in 0..hidden {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tc[k] = c[k].tanh();
        h[k] = o[k] * tc[k];
    }
    (c, tc, h)
}

/// Writes `dz` (pre-activation gradient) and returns `dc_prev`.
fn cell_grad(
    gates: &[f64],
    c_prev: &[f64],
    tanh_c: &[f64],
    dh: &[f64],
    dc_in: &[f64],
    dz: &mut [f64],
    hidden: usize,
) -> Vec<f64> {
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, g, o) = (gates[k], gates[hidden + k], gates[2 * hidden + k], gates[3 * hidden + k]);
        let tc = tanh_c[k];
        let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dc * g * i * (1.0 - i);
        dz[hidden + k] = dc * c_prev[k] * f * (1.0 - f);
        dz[2 * hidden + k] = dc * i * (1.0 - g * g);
        dz[3 * hidden + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
    dc_prev
}

impl LstmDirection {
    pub fn new(prefix: &str, input: usize, hidden: usize, reverse: bool) -> Self {
        Self {
            w_ih: Parameter::zeros(format!("{prefix}.w_ih"), &[input, 4 * hidden]),
            w_hh: Parameter::zeros(format!("{prefix}.w_hh"), &[hidden, 4 * hidden]),
            bias: Parameter::zeros(format!("{prefix}.bias"), &[4 * hidden]),
            reverse,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.value.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.value.shape()[0]
    }

    /// Indices `H..2H` of the bias, the forget gate.
    pub fn forget_bias_mut(&mut self) -> &mut [f64] {
        let h = self.hidden();
        &mut self.bias.value.data_mut()[h..2 * h]
    }

    fn check_shapes(&self) -> Result<()> {
        let (a, h) = (self.input_dim(), self.hidden());
        if self.w_ih.value.shape() != [a, 4 * h] || self.bias.value.shape() != [4 * h] {
            return Err(Error::shape("lstm parameters", &[a, 4 * h], self.w_ih.value.shape()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DirectionCache)> {
        self.check_shapes()?;
        let (a, h) = (self.input_dim(), self.hidden());
        x.expect_cols("lstm input", a)?;
        let t_len = x.rows();
        let g4 = 4 * h;

        let mut z = Vec::with_capacity(t_len * g4);
        for _ in 0..t_len {
            z.extend_from_slice(self.bias.value.data());
        }
        matmul_acc(x.data(), self.w_ih.value.data(), &mut z, t_len, a, g4);

        let mut out = vec![0.0; t_len * h];
        let mut h_prev_all = vec![0.0; t_len * h];
        let mut c_prev_all = vec![0.0; t_len * h];
        let mut tanh_all = vec![0.0; t_len * h];
        let mut h_state = vec![0.0; h];
        let mut c_state = vec![0.0; h];
        for step in 0..t_len {
            let t = if self.reverse { t_len - 1 - step } else { step };
            let zt = &mut z[t * g4..(t + 1) * g4];
            matmul_acc(&h_state, self.w_hh.value.data(), zt, 1, h, g4);
            activate(zt, h);
            let (c, tc, hn) = cell_update(zt, &c_state, h);
            h_prev_all[t * h..(t + 1) * h].copy_from_slice(&h_state);
            c_prev_all[t * h..(t + 1) * h].copy_from_slice(&c_state);
            tanh_all[t * h..(t + 1) * h].copy_from_slice(&tc);
            out[t * h..(t + 1) * h].copy_from_slice(&hn);
            h_state = hn;
            c_state = c;
        }
        let cache = DirectionCache {
            x: x.clone(),
            h_prev: h_prev_all,
            c_prev: c_prev_all,
            gates: z,
            tanh_c: tanh_all,
        };
        Ok((Tensor::matrix(t_len, h, out)?, cache))
    }

    /// Backpropagation through time. Accumulates parameter gradients and
    /// returns the gradient with respect to the input sequence.
    pub fn backward(&mut self, cache: &DirectionCache, dh_out: &Tensor) -> Result<Tensor> {
        let (a, h) = (self.input_dim(), self.hidden());
        let t_len = cache.x.rows();
        dh_out.expect_cols("lstm backward", h)?;
        if dh_out.rows() != t_len {
            return Err(Error::shape("lstm backward", &[t_len, h], dh_out.shape()));
        }
        let g4 = 4 * h;
        let mut dz = vec![0.0; t_len * g4];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for step in (0..t_len).rev() {
            let t = if self.reverse { t_len - 1 - step } else { step };
            let dh: Vec<f64> = dh_out.row(t).iter().zip(&dh_next).map(|(a, b)| a + b).collect();
            let span = t * h..(t + 1) * h;
            let dzt = &mut dz[t * g4..(t + 1) * g4];
            dc_next = cell_grad(
                &cache.gates[t * g4..(t + 1) * g4],
                &cache.c_prev[span.clone()],
                &cache.tanh_c[span],
                &dh,
                &dc_next,
                dzt,
                h,
            );
            dh_next = vec![0.0; h];
            matmul_bt_acc(dzt, self.w_hh.value.data(), &mut dh_next, 1, g4, h);
        }
        matmul_at_acc(&cache.h_prev, &dz, self.w_hh.grad.data_mut(), t_len, h, g4);
        matmul_at_acc(cache.x.data(), &dz, self.w_ih.grad.data_mut(), t_len, a, g4);
        let bias_grad = self.bias.grad.data_mut();
        for row in dz.chunks_exact(g4) {
            for (g, d) in bias_grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; t_len * a];
        matmul_bt_acc(&dz, self.w_ih.value.data(), &mut dx, t_len, g4, a);
        Tensor::matrix(t_len, a, dx)
    }
}

impl Module for LstmDirection {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.w_ih);
        f(&self.w_hh);
        f(&self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.w_ih);
        f(&mut self.w_hh);
        f(&mut self.bias);
    }
}

/// Single LSTM step: returns `(h_t, c_t)` and the cache for
/// [`lstm_cell_backward`].
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &LstmDirection,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    params.check_shapes()?;
    let (a, h) = (params.input_dim(), params.hidden());
    if x.len() != a || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::shape("lstm cell", &[a, h, h], &[x.len(), h_prev.len(), c_prev.len()]));
    }
    let mut z = params.bias.value.data().to_vec();
    matmul_acc(x, params.w_ih.value.data(), &mut z, 1, a, 4 * h);
    matmul_acc(h_prev, params.w_hh.value.data(), &mut z, 1, h, 4 * h);
    activate(&mut z, h);
    let (c, tanh_c, h_new) = cell_update(&z, c_prev, h);
    let cache = CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        tanh_c,
    };
    Ok((h_new, c, cache))
}

/// Backward of one cell step given `dL/dh_t` and `dL/dc_t`. Accumulates
/// parameter gradients; returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    params: &mut LstmDirection,
    cache: &CellCache,
    dh: &[f64],
    dc: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (a, h) = (params.input_dim(), params.hidden());
    let mut dz = vec![0.0; 4 * h];
    let dc_prev = cell_grad(&cache.gates, &cache.c_prev, &cache.tanh_c, dh, dc, &mut dz, h);
    matmul_at_acc(&cache.x, &dz, params.w_ih.grad.data_mut(), 1, a, 4 * h);
    matmul_at_acc(&cache.h_prev, &dz, params.w_hh.grad.data_mut(), 1, h, 4 * h);
    for (g, d) in params.bias.grad.data_mut().iter_mut().zip(&dz) {
        *g += d;
    }
    let mut dx = vec![0.0; a];
    matmul_bt_acc(&dz, params.w_ih.value.data(), &mut dx, 1, 4 * h, a);
    let mut dh_prev = vec![0.0; h];
    matmul_bt_acc(&dz, params.w_hh.value.data(), &mut dh_prev, 1, 4 * h, h);
    (dx, dh_prev, dc_prev)
}

/// Forward and backward LSTMs over the same input, outputs concatenated per
/// frame as `[forward | backward]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmLayer {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache {
    fwd: DirectionCache,
    bwd: DirectionCache,
}

impl BiLstmLayer {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            fwd: LstmDirection::new(&format!("{prefix}.fwd"), input, hidden, false),
            bwd: LstmDirection::new(&format!("{prefix}.bwd"), input, hidden, true),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    pub fn forward(&self, seq: &Tensor) -> Result<(Tensor, BiLstmCache)> {
        let (hf, cf) = self.fwd.forward(seq)?;
        let (hb, cb) = self.bwd.forward(seq)?;
        let h = self.hidden();
        let t_len = seq.rows();
        let mut out = Vec::with_capacity(t_len * 2 * h);
        for t in 0..t_len {
            out.extend_from_slice(hf.row(t));
            out.extend_from_slice(hb.row(t));
        }
        Ok((Tensor::matrix(t_len, 2 * h, out)?, BiLstmCache { fwd: cf, bwd: cb }))
    }

    pub fn backward(&mut self, cache: &BiLstmCache, dout: &Tensor) -> Result<Tensor> {
        let h = self.hidden();
        dout.expect_cols("bilstm backward", 2 * h)?;
        let t_len = dout.rows();
        let dhf = Tensor::from_fn(t_len, h, |t, k| dout.get(t, k));
        let dhb = Tensor::from_fn(t_len, h, |t, k| dout.get(t, h + k));
        let mut dx = self.fwd.backward(&cache.fwd, &dhf)?;
        let dxb = self.bwd.backward(&cache.bwd, &dhb)?;
        for (a, b) in dx.data_mut().iter_mut().zip(dxb.data()) {
            *a += b;
        }
        Ok(dx)
    }
}

impl Module for BiLstmLayer {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter)) {
        self.fwd.visit_params(f);
        self.bwd.visit_params(f);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.fwd.visit_params_mut(f);
        self.bwd.visit_params_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::grad_check;

    fn randomize(m: &mut impl Module, rng: &mut ChaCha8Rng, scale: f64) {
        m.visit_params_mut(&mut |p| {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale))
        });
    }

    #[test]
    fn zero_cell_gives_zero_state() {
        let p = LstmDirection::new("l", 3, 2, false);
        let (h, c, _) = lstm_cell(&[0.0; 3], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn saturated_forget_keeps_cell() {
        let mut p = LstmDirection::new("l", 1, 1, false);
        // biases: i very negative, f very positive
        p.bias.value.data_mut().copy_from_slice(&[-40.0, 40.0, 0.0, 0.0]);
        let (_, c, _) = lstm_cell(&[0.7], &[0.3], &[0.42], &p).unwrap();
        assert!((c[0] - 0.42).abs() < 1e-6);
    }

    #[test]
    fn cell_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = LstmDirection::new("l", 3, 2, false);
        randomize(&mut p, &mut rng, 0.8);
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wh = [0.3, -1.2];
        let wc = [0.7, 0.4];
        let init = p.flat_values();
        let report = grad_check(
            |v| {
                p.set_flat_values(v);
                p.zero_grad();
                let (h, c, cache) = lstm_cell(&x, &h0, &c0, &p).unwrap();
                let loss = h[0] * wh[0] + h[1] * wh[1] + c[0] * wc[0] + c[1] * wc[1];
                lstm_cell_backward(&mut p, &cache, &wh, &wc);
                (loss, p.flat_grads())
            },
            &init,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }

    #[test]
    fn single_frame_concatenates_both_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut layer = BiLstmLayer::new("b", 3, 2);
        randomize(&mut layer, &mut rng, 0.5);
        let x = Tensor::from_fn(1, 3, |_, c| c as f64 * 0.3 - 0.2);
        let (out, _) = layer.forward(&x).unwrap();
        let (hf, _, _) = lstm_cell(x.row(0), &[0.0; 2], &[0.0; 2], &layer.fwd).unwrap();
        let (hb, _, _) = lstm_cell(x.row(0), &[0.0; 2], &[0.0; 2], &layer.bwd).unwrap();
        assert_eq!(&out.row(0)[..2], &hf[..]);
        assert_eq!(&out.row(0)[2..], &hb[..]);
    }

    #[test]
    fn reversal_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut layer = BiLstmLayer::new("b", 2, 3);
        randomize(&mut layer, &mut rng, 0.7);
        let x = Tensor::from_fn(5, 2, |_, _| rng.gen_range(-1.0..1.0));
        let (out, _) = layer.forward(&x).unwrap();

        let mut swapped = layer.clone();
        std::mem::swap(&mut swapped.fwd, &mut swapped.bwd);
        swapped.fwd.reverse = false;
        swapped.bwd.reverse = true;
        let (out_rev, _) = swapped.forward(&x.reversed_rows()).unwrap();
        for t in 0..5 {
            let a = out.row(t);
            let b = out_rev.row(4 - t);
            assert_eq!(&a[..3], &b[3..]);
            assert_eq!(&a[3..], &b[..3]);
        }
    }

    #[test]
    fn bilstm_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut layer = BiLstmLayer::new("b", 2, 2);
        randomize(&mut layer, &mut rng, 0.8);
        let x = Tensor::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(3, 4, |_, _| rng.gen_range(-1.0..1.0));
        let init = layer.flat_values();
        let report = grad_check(
            |v| {
                layer.set_flat_values(v);
                layer.zero_grad();
                let (out, cache) = layer.forward(&x).unwrap();
                let loss: f64 = out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
                layer.backward(&cache, &w).unwrap();
                (loss, layer.flat_grads())
            },
            &init,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");

        // and with respect to the input
        let xs = x.data().to_vec();
        let report = grad_check(
            |v| {
                let xi = Tensor::matrix(3, 2, v.to_vec()).unwrap();
                layer.zero_grad();
                let (out, cache) = layer.forward(&xi).unwrap();
                let loss: f64 = out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum();
                let dx = layer.backward(&cache, &w).unwrap();
                (loss, dx.into_data())
            },
            &xs,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "{report:?}");
    }
}

//! Minimal dense arithmetic with hand-written forward and backward passes
//! for every layer the models use.
//!
//! Values are stored as `f64`. Under [`Precision::Train32`] the optimizer
//! rounds parameters to the nearest `f32` after every update, so trained
//! parameters are exactly representable in the 32-bit checkpoint format;
//! gradient checks run under [`Precision::Check64`] without rounding.

mod dropout;
mod gradcheck;
mod linear;
mod lstm;
pub(crate) mod ops;

pub use dropout::{dropout, DropoutMask};
pub use gradcheck::{grad_check, grad_check_scaled, GradCheckReport};
pub use linear::Linear;
pub use lstm::{lstm_cell, lstm_cell_backward, BiLstmCache, BiLstmLayer, CellCache, LstmDirection};
pub use ops::{relu, relu_backward, sigmoid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Train32,
    Check64,
}

impl Precision {
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::Train32 => v as f32 as f64,
            Precision::Check64 => v,
        }
    }
}

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidArgument(format!("tensor shape must be positive, got {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("tensor", &[n], &[data.len()]));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Leading dimension (rows of a matrix, length of a vector).
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Trailing dimension of a matrix; 1 for a vector.
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn reversed_rows(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.data.len());
        for r in (0..self.rows()).rev() {
            data.extend_from_slice(self.row(r));
        }
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub(crate) fn expect_cols(&self, context: &'static str, cols: usize) -> Result<()> {
        if self.shape.len() != 2 || self.cols() != cols {
            return Err(Error::shape(context, &[self.rows(), cols], &self.shape));
        }
        Ok(())
    }
}

/// A named trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
        }
    }

    pub fn from_value(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns parameters, visited in a fixed order.
pub trait Module {
    fn visit_params(&self, f: &mut dyn FnMut(&Parameter));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut Parameter));

    fn zero_grad(&mut self) {
        self.visit_params_mut(&mut |p| p.zero_grad());
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.value.len());
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |p| names.push(p.name.clone()));
        names
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.extend_from_slice(p.value.data()));
        out
    }

    fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.extend_from_slice(p.grad.data()));
        out
    }

    fn set_flat_values(&mut self, values: &[f64]) {
        let mut offset = 0;
        self.visit_params_mut(&mut |p| {
            let n = p.value.len();
            p.value.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        });
        assert_eq!(offset, values.len(), "flat parameter length mismatch");
    }

    /// Add `grads` (in visit order) to the accumulated gradients.
    fn add_flat_grads(&mut self, grads: &[f64], scale: f64) {
        let mut offset = 0;
        self.visit_params_mut(&mut |p| {
            let n = p.grad.len();
            for (g, x) in p.grad.data_mut().iter_mut().zip(&grads[offset..offset + n]) {
                *g += scale * x;
            }
            offset += n;
        });
        assert_eq!(offset, grads.len(), "flat gradient length mismatch");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_shape_validation() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        let t = Tensor::matrix(2, 3, (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
        assert_eq!(t.reversed_rows().row(0), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn train32_rounds_to_f32() {
        let v = 0.1f64;
        assert_eq!(Precision::Train32.round(v), 0.1f32 as f64);
        assert_eq!(Precision::Check64.round(v), v);
    }
}

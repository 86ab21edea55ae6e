//! Dense rank-3 tensors and layer parameter buffers.
//!
//! [`Tensor3`] is the one value that flows through every layer: a contiguous
//! (batch, time, feature) block of f64 with a same-shape gradient buffer.
//! [`LayerParams`] pairs a weight matrix and bias vector with their gradient
//! buffers; every layer owns one or more of them.

use crate::error::{Error, Result};
use crate::rng::RngState;

/// Dense (batch, time, feature) tensor with a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    shape: (usize, usize, usize),
    data: Vec<f64>,
    grad: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(batch: usize, time: usize, feature: usize) -> Self {
        let n = batch * time * feature;
        Tensor3 {
            shape: (batch, time, feature),
            data: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    /// Builds a tensor from row-major data; length must equal the product of
    /// the three axes.
    pub fn from_vec(batch: usize, time: usize, feature: usize, data: Vec<f64>) -> Result<Self> {
        let n = batch * time * feature;
        if data.len() != n {
            return Err(Error::DimensionMismatch {
                op: "Tensor3::from_vec",
                axis: "flat",
                expected: n,
                got: data.len(),
            });
        }
        Ok(Tensor3 {
            shape: (batch, time, feature),
            grad: vec![0.0; n],
            data,
        })
    }

    /// Fills a new tensor with standard-normal draws; used by tests and the
    /// gradient checker.
    pub fn randn(batch: usize, time: usize, feature: usize, rng: &mut RngState) -> Self {
        let n = batch * time * feature;
        let data = (0..n).map(|_| rng.normal()).collect();
        Tensor3 {
            shape: (batch, time, feature),
            data,
            grad: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape.0
    }

    pub fn time(&self) -> usize {
        self.shape.1
    }

    pub fn feature(&self) -> usize {
        self.shape.2
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, b: usize, t: usize, f: usize) -> usize {
        (b * self.shape.1 + t) * self.shape.2 + f
    }

    #[inline]
    pub fn get(&self, b: usize, t: usize, f: usize) -> f64 {
        self.data[self.idx(b, t, f)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, t: usize, f: usize, v: f64) {
        let i = self.idx(b, t, f);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// One layer's weights and bias, with matching gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub name: String,
    pub weight_shape: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub weight_grad: Vec<f64>,
    pub bias_grad: Vec<f64>,
}

impl LayerParams {
    /// Zero-filled parameters of the declared shape.
    pub fn zeros(name: &str, weight_shape: &[usize], bias_len: usize) -> Self {
        let n: usize = weight_shape.iter().product();
        LayerParams {
            name: name.to_string(),
            weight_shape: weight_shape.to_vec(),
            weights: vec![0.0; n],
            bias: vec![0.0; bias_len],
            weight_grad: vec![0.0; n],
            bias_grad: vec![0.0; bias_len],
        }
    }

    /// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero bias.
    pub fn glorot(
        name: &str,
        weight_shape: &[usize],
        bias_len: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut RngState,
    ) -> Self {
        let mut p = LayerParams::zeros(name, weight_shape, bias_len);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in &mut p.weights {
            *w = rng.uniform_in(-bound, bound);
        }
        p
    }

    pub fn zero_grads(&mut self) {
        self.weight_grad.iter_mut().for_each(|g| *g = 0.0);
        self.bias_grad.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Number of learnable scalars (weights plus bias).
    pub fn count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn grads_finite(&self) -> bool {
        self.weight_grad.iter().chain(&self.bias_grad).all(|g| g.is_finite())
    }
}

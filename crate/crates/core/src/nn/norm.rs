//! Layer normalization across the feature axis, and the residual add that
//! wraps each transformer sublayer.

use crate::error::{Error, Result};
use crate::nn::{check_same_shape, Layer, Mode};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

pub const LAYER_NORM_EPSILON: f64 = 1e-5;

/// Mean and population variance of one (batch, time) position's features.
pub fn layer_norm_stats(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Normalizes each (batch, time) position to zero mean and unit variance
/// across features, then applies a learned gain and bias.
#[derive(Debug)]
pub struct LayerNorm {
    pub params: LayerParams,
    epsilon: f64,
}

impl LayerNorm {
    pub fn new(name: &str, features: usize) -> Self {
        Self::with_epsilon(name, features, LAYER_NORM_EPSILON)
    }

    pub fn with_epsilon(name: &str, features: usize, epsilon: f64) -> Self {
        let mut params = LayerParams::zeros(name, &[features], features);
        params.weights.iter_mut().for_each(|g| *g = 1.0);
        LayerNorm { params, epsilon }
    }
}

impl Layer for LayerNorm {
    fn kind(&self) -> &'static str {
        "layer_norm"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if feat != self.params.weights.len() {
            return Err(Error::DimensionMismatch {
                op: "layer_norm",
                axis: "feature",
                expected: self.params.weights.len(),
                got: feat,
            });
        }
        let mut out = Tensor3::zeros(batch, time, feat);
        for b in 0..batch {
            for t in 0..time {
                let i0 = input.idx(b, t, 0);
                let row = &input.data()[i0..i0 + feat];
                let (mean, var) = layer_norm_stats(row);
                let inv = 1.0 / (var + self.epsilon).sqrt();
                for f in 0..feat {
                    let xhat = (row[f] - mean) * inv;
                    out.set(b, t, f, self.params.weights[f] * xhat + self.params.bias[f]);
                }
            }
        }
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let (batch, time, feat) = input.shape();
        let n = feat as f64;
        let mut xhat = vec![0.0; feat];
        let mut dxhat = vec![0.0; feat];
        for b in 0..batch {
            for t in 0..time {
                let i0 = input.idx(b, t, 0);
                let row = &input.data()[i0..i0 + feat];
                let (mean, var) = layer_norm_stats(row);
                let inv = 1.0 / (var + self.epsilon).sqrt();
                for f in 0..feat {
                    xhat[f] = (row[f] - mean) * inv;
                    let g = output.grad()[output.idx(b, t, f)];
                    self.params.weight_grad[f] += g * xhat[f];
                    self.params.bias_grad[f] += g;
                    dxhat[f] = g * self.params.weights[f];
                }
                let mean_dxhat = dxhat.iter().sum::<f64>() / n;
                let mean_dxhat_xhat =
                    dxhat.iter().zip(&xhat).map(|(d, x)| d * x).sum::<f64>() / n;
                for f in 0..feat {
                    input.grad_mut()[i0 + f] +=
                        inv * (dxhat[f] - mean_dxhat - xhat[f] * mean_dxhat_xhat);
                }
            }
        }
        Ok(())
    }

    fn params(&self) -> Vec<&LayerParams> {
        vec![&self.params]
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        vec![&mut self.params]
    }
}

/// Elementwise sum of a sublayer input and output. The backward pass sends
/// the incoming gradient unchanged to both operands, which callers do by
/// accumulating the output gradient into each input's buffer.
pub fn residual_add(x: &Tensor3, sublayer_out: &Tensor3) -> Result<Tensor3> {
    check_same_shape("residual_add", x, sublayer_out)?;
    let (b, t, f) = x.shape();
    let data = x.data().iter().zip(sublayer_out.data()).map(|(a, b)| a + b).collect();
    Tensor3::from_vec(b, t, f, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_row_normalizes_to_zero() {
        let mut rng = RngState::new(0);
        let mut ln = LayerNorm::new("ln", 3);
        let input = Tensor3::from_vec(1, 1, 3, vec![4.0; 3]).unwrap();
        let out = ln.forward(&input, Mode::Infer, &mut rng).unwrap();
        // Zero variance is absorbed by epsilon: 0/sqrt(eps) = 0.
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_row_normalizes_to_unit() {
        let mut rng = RngState::new(0);
        let mut ln = LayerNorm::new("ln", 2);
        let input = Tensor3::from_vec(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let out = ln.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert!((out.get(0, 0, 0) - -1.0).abs() < 1e-5);
        assert!((out.get(0, 0, 1) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn output_mean_equals_bias() {
        let mut rng = RngState::new(1);
        let mut ln = LayerNorm::new("ln", 8);
        ln.params.bias.iter_mut().for_each(|b| *b = 0.25);
        let input = Tensor3::randn(2, 3, 8, &mut rng);
        let out = ln.forward(&input, Mode::Infer, &mut rng).unwrap();
        for b in 0..2 {
            for t in 0..3 {
                let mean: f64 = (0..8).map(|f| out.get(b, t, f)).sum::<f64>() / 8.0;
                assert!((mean - 0.25).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn residual_identity_and_cancellation() {
        let mut rng = RngState::new(2);
        let x = Tensor3::randn(1, 2, 3, &mut rng);
        let zeros = Tensor3::zeros(1, 2, 3);
        assert_eq!(residual_add(&x, &zeros).unwrap().data(), x.data());

        let neg = Tensor3::from_vec(1, 2, 3, x.data().iter().map(|v| -v).collect()).unwrap();
        assert!(residual_add(&x, &neg).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_is_commutative() {
        let mut rng = RngState::new(3);
        let x = Tensor3::randn(1, 2, 3, &mut rng);
        let y = Tensor3::randn(1, 2, 3, &mut rng);
        assert_eq!(residual_add(&x, &y).unwrap().data(), residual_add(&y, &x).unwrap().data());
    }

    #[test]
    fn residual_shape_mismatch_rejected() {
        let x = Tensor3::zeros(1, 2, 3);
        let y = Tensor3::zeros(1, 3, 3);
        assert_eq!(residual_add(&x, &y).unwrap_err().category(), "dimension");
    }
}

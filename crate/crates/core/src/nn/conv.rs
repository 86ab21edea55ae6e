//! Valid (no-padding) multi-channel 1-D convolution with ReLU.

use crate::error::{Error, Result};
use crate::nn::{Layer, Mode};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

/// 1-D convolution over the time axis followed by ReLU.
///
/// Weights are (filters, in_features, kernel); the sum runs over every input
/// channel as well as the kernel taps, so the 64 filters mix all feature
/// channels. Output time length is `time - kernel + 1`.
#[derive(Debug)]
pub struct Conv1d {
    pub params: LayerParams,
    kernel: usize,
    filters: usize,
    in_features: usize,
}

impl Conv1d {
    pub fn new(
        name: &str,
        in_features: usize,
        filters: usize,
        kernel: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        if kernel == 0 {
            return Err(Error::InvalidArgument {
                what: "kernel_size",
                details: "must be at least 1".into(),
            });
        }
        if filters == 0 {
            return Err(Error::InvalidArgument {
                what: "filters",
                details: "must be at least 1".into(),
            });
        }
        let params = LayerParams::glorot(
            name,
            &[filters, in_features, kernel],
            filters,
            in_features * kernel,
            filters * kernel,
            rng,
        );
        Ok(Conv1d { params, kernel, filters, in_features })
    }

    /// Wraps an existing parameter set; shape must be (filters, in, kernel).
    pub fn from_params(params: LayerParams) -> Result<Self> {
        if params.weight_shape.len() != 3 || params.bias.len() != params.weight_shape[0] {
            return Err(Error::Configuration(format!(
                "conv1d params {:?} must have shape (filters, in_features, kernel)",
                params.weight_shape
            )));
        }
        let (filters, in_features, kernel) =
            (params.weight_shape[0], params.weight_shape[1], params.weight_shape[2]);
        Ok(Conv1d { params, kernel, filters, in_features })
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn out_time(&self, in_time: usize) -> usize {
        in_time - self.kernel + 1
    }

    #[inline]
    fn w(&self, f: usize, c: usize, i: usize) -> f64 {
        self.params.weights[(f * self.in_features + c) * self.kernel + i]
    }
}

impl Layer for Conv1d {
    fn kind(&self) -> &'static str {
        "conv1d"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if feat != self.in_features {
            return Err(Error::DimensionMismatch {
                op: "conv1d",
                axis: "feature",
                expected: self.in_features,
                got: feat,
            });
        }
        if time < self.kernel {
            return Err(Error::InvalidWindow { kernel: self.kernel, time });
        }
        let out_time = self.out_time(time);
        let mut out = Tensor3::zeros(batch, out_time, self.filters);
        for b in 0..batch {
            for t in 0..out_time {
                for f in 0..self.filters {
                    let mut acc = self.params.bias[f];
                    for i in 0..self.kernel {
                        let xi = input.idx(b, t + i, 0);
                        for c in 0..feat {
                            acc += self.w(f, c, i) * input.data()[xi + c];
                        }
                    }
                    out.set(b, t, f, acc.max(0.0));
                }
            }
        }
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let (batch, _, feat) = input.shape();
        let (_, out_time, filters) = output.shape();
        for b in 0..batch {
            for t in 0..out_time {
                for f in 0..filters {
                    // ReLU gate: output > 0 iff pre-activation > 0.
                    let oi = output.idx(b, t, f);
                    if output.data()[oi] <= 0.0 {
                        continue;
                    }
                    let g = output.grad()[oi];
                    if g == 0.0 {
                        continue;
                    }
                    self.params.bias_grad[f] += g;
                    for i in 0..self.kernel {
                        let xi = input.idx(b, t + i, 0);
                        for c in 0..feat {
                            let wi = (f * self.in_features + c) * self.kernel + i;
                            self.params.weight_grad[wi] += g * input.data()[xi + c];
                            input.grad_mut()[xi + c] += g * self.params.weights[wi];
                        }
                    }
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

#[cfg(test)]
mod tests {
    use super::*;

    fn conv_with_kernel(in_features: usize, kernel: Vec<f64>, bias: f64) -> Conv1d {
        let k = kernel.len() / in_features;
        let mut params = LayerParams::zeros("conv", &[1, in_features, k], 1);
        params.weights = kernel;
        params.bias[0] = bias;
        Conv1d::from_params(params).unwrap()
    }

    /// Independent brute-force oracle: plain sliding-window sum, no ReLU.
    fn conv_oracle(series: &[f64], kernel: &[f64], bias: f64) -> Vec<f64> {
        let k = kernel.len();
        (0..=series.len() - k)
            .map(|t| {
                let mut acc = bias;
                for i in 0..k {
                    acc += kernel[i] * series[t + i];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn sliding_window_matches_oracle() {
        let series = [1.0, 2.0, 3.0, 4.0];
        let kernel = [1.0, 0.0, -1.0];
        let expected_pre = conv_oracle(&series, &kernel, 0.0);
        assert_eq!(expected_pre, vec![-2.0, -2.0]);

        let mut rng = RngState::new(0);
        let mut conv = conv_with_kernel(1, kernel.to_vec(), 0.0);
        let input = Tensor3::from_vec(1, 4, 1, series.to_vec()).unwrap();
        let out = conv.forward(&input, Mode::Infer, &mut rng).unwrap();
        // Post-ReLU the negative pre-activations clamp to zero.
        assert_eq!(out.data(), &[0.0, 0.0]);

        // A positive kernel exercises the non-clamped path against the oracle.
        let kernel = [0.5, 0.25, 0.125];
        let mut conv = conv_with_kernel(1, kernel.to_vec(), 0.1);
        let out = conv.forward(&input, Mode::Infer, &mut rng).unwrap();
        let expected: Vec<f64> =
            conv_oracle(&series, &kernel, 0.1).into_iter().map(|v| v.max(0.0)).collect();
        for (a, e) in out.data().iter().zip(&expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_weights_zero_output() {
        let mut rng = RngState::new(1);
        let mut conv = conv_with_kernel(2, vec![0.0; 6], 0.0);
        let input = Tensor3::randn(2, 5, 2, &mut rng);
        let out = conv.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_is_relu() {
        let mut rng = RngState::new(2);
        let mut conv = conv_with_kernel(1, vec![1.0], 0.0);
        let input = Tensor3::from_vec(1, 4, 1, vec![-1.0, 0.5, -0.25, 2.0]).unwrap();
        let out = conv.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.data(), &[0.0, 0.5, 0.0, 2.0]);
        assert_eq!(out.time(), 4);
    }

    #[test]
    fn output_time_is_input_minus_kernel_plus_one() {
        let mut rng = RngState::new(3);
        let mut conv = Conv1d::new("conv", 3, 4, 5, &mut rng).unwrap();
        let input = Tensor3::randn(2, 12, 3, &mut rng);
        let out = conv.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.shape(), (2, 8, 4));
    }

    #[test]
    fn kernel_longer_than_time_is_invalid_window() {
        let mut rng = RngState::new(4);
        let mut conv = Conv1d::new("conv", 1, 1, 5, &mut rng).unwrap();
        let input = Tensor3::zeros(1, 3, 1);
        let err = conv.forward(&input, Mode::Infer, &mut rng).unwrap_err();
        assert_eq!(err, Error::InvalidWindow { kernel: 5, time: 3 });
    }

    #[test]
    fn feature_mismatch_names_axis() {
        let mut rng = RngState::new(5);
        let mut conv = Conv1d::new("conv", 3, 2, 2, &mut rng).unwrap();
        let input = Tensor3::zeros(1, 6, 4);
        let err = conv.forward(&input, Mode::Infer, &mut rng).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch { op: "conv1d", axis: "feature", expected: 3, got: 4 }
        );
    }
}

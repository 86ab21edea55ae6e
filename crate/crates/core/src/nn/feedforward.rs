//! Position-wise feedforward block: Linear → ReLU → Linear, applied
//! independently at every time step.

use crate::error::{Error, Result};
use crate::nn::{affine_backward, affine_forward, Layer, Mode};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

#[derive(Debug)]
pub struct FeedForward {
    pub w1: LayerParams,
    pub w2: LayerParams,
    hidden: Option<Tensor3>,
}

impl FeedForward {
    pub fn new(name: &str, features: usize, hidden: usize, rng: &mut RngState) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument {
                what: "feedforward hidden width",
                details: "must be at least 1".into(),
            });
        }
        Ok(FeedForward {
            w1: LayerParams::glorot(
                &format!("{name}.w1"),
                &[features, hidden],
                hidden,
                features,
                hidden,
                rng,
            ),
            w2: LayerParams::glorot(
                &format!("{name}.w2"),
                &[hidden, features],
                features,
                hidden,
                features,
                rng,
            ),
            hidden: None,
        })
    }

    pub fn hidden_width(&self) -> usize {
        self.w1.bias.len()
    }
}

impl Layer for FeedForward {
    fn kind(&self) -> &'static str {
        "feedforward"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let feat = input.feature();
        if feat != self.w1.weight_shape[0] {
            return Err(Error::DimensionMismatch {
                op: "feedforward",
                axis: "feature",
                expected: self.w1.weight_shape[0],
                got: feat,
            });
        }
        let mut hidden = affine_forward(input, &self.w1);
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let out = affine_forward(&hidden, &self.w2);
        self.hidden = Some(hidden);
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let mut hidden = self
            .hidden
            .take()
            .ok_or_else(|| Error::Configuration("backward before forward".into()))?;
        affine_backward(&mut hidden, &mut self.w2, output);
        // ReLU gate on the hidden activations (post-ReLU > 0 iff pre > 0).
        for i in 0..hidden.len() {
            if hidden.data()[i] <= 0.0 {
                hidden.grad_mut()[i] = 0.0;
            }
        }
        affine_backward(input, &mut self.w1, &hidden);
        Ok(())
    }

    fn params(&self) -> Vec<&LayerParams> {
        vec![&self.w1, &self.w2]
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        vec![&mut self.w1, &mut self.w2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_zero_output() {
        let mut rng = RngState::new(0);
        let mut ffn = FeedForward::new("ffn", 4, 8, &mut rng).unwrap();
        ffn.w1.weights.iter_mut().for_each(|w| *w = 0.0);
        ffn.w2.weights.iter_mut().for_each(|w| *w = 0.0);
        let input = Tensor3::randn(2, 3, 4, &mut rng);
        let out = ffn.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_width_is_configured() {
        let mut rng = RngState::new(1);
        let ffn = FeedForward::new("ffn", 16, 64, &mut rng).unwrap();
        assert_eq!(ffn.hidden_width(), 64);
        assert_eq!(ffn.w1.weight_shape, vec![16, 64]);
        assert_eq!(ffn.w2.weight_shape, vec![64, 16]);
    }

    #[test]
    fn output_keeps_input_shape() {
        let mut rng = RngState::new(2);
        let mut ffn = FeedForward::new("ffn", 5, 7, &mut rng).unwrap();
        let input = Tensor3::randn(2, 4, 5, &mut rng);
        let out = ffn.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.shape(), input.shape());
    }
}

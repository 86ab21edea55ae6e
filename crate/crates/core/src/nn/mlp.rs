//! Classifier head: Linear → ReLU → Linear → sigmoid on the pooled features.

use crate::error::{Error, Result};
use crate::nn::{affine_backward, affine_forward, Layer, Mode};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

/// Clamp bound keeping scores strictly inside (0, 1) even when the logit
/// saturates in f64.
pub const SCORE_CLAMP: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maps (B, 1, F) pooled features to one probability per batch row.
#[derive(Debug)]
pub struct MlpHead {
    pub w1: LayerParams,
    pub w2: LayerParams,
    hidden: Option<Tensor3>,
    logits: Option<Tensor3>,
    scores: Vec<f64>,
}

impl MlpHead {
    pub fn new(name: &str, features: usize, hidden: usize, rng: &mut RngState) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument {
                what: "mlp hidden width",
                details: "must be at least 1".into(),
            });
        }
        Ok(MlpHead {
            w1: LayerParams::glorot(
                &format!("{name}.w1"),
                &[features, hidden],
                hidden,
                features,
                hidden,
                rng,
            ),
            w2: LayerParams::glorot(&format!("{name}.w2"), &[hidden, 1], 1, hidden, 1, rng),
            hidden: None,
            logits: None,
            scores: Vec::new(),
        })
    }
}

impl Layer for MlpHead {
    fn kind(&self) -> &'static str {
        "mlp_head"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if time != 1 {
            return Err(Error::DimensionMismatch {
                op: "mlp_head",
                axis: "time",
                expected: 1,
                got: time,
            });
        }
        if feat != self.w1.weight_shape[0] {
            return Err(Error::DimensionMismatch {
                op: "mlp_head",
                axis: "feature",
                expected: self.w1.weight_shape[0],
                got: feat,
            });
        }
        let mut hidden = affine_forward(input, &self.w1);
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let logits = affine_forward(&hidden, &self.w2);
        let mut out = Tensor3::zeros(batch, 1, 1);
        self.scores.clear();
        for b in 0..batch {
            let s = sigmoid(logits.get(b, 0, 0)).clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
            out.set(b, 0, 0, s);
            self.scores.push(s);
        }
        self.hidden = Some(hidden);
        self.logits = Some(logits);
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let batch = input.batch();
        let mut hidden = self
            .hidden
            .take()
            .ok_or_else(|| Error::Configuration("backward before forward".into()))?;
        let mut logits = self
            .logits
            .take()
            .ok_or_else(|| Error::Configuration("backward before forward".into()))?;
        for b in 0..batch {
            let s = self.scores[b];
            let gi = logits.idx(b, 0, 0);
            logits.grad_mut()[gi] = output.grad()[output.idx(b, 0, 0)] * s * (1.0 - s);
        }
        affine_backward(&mut hidden, &mut self.w2, &logits);
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

    fn zeroed_head(features: usize, hidden: usize, final_bias: f64) -> MlpHead {
        let mut rng = RngState::new(0);
        let mut head = MlpHead::new("mlp", features, hidden, &mut rng).unwrap();
        head.w1.weights.iter_mut().for_each(|w| *w = 0.0);
        head.w2.weights.iter_mut().for_each(|w| *w = 0.0);
        head.w2.bias[0] = final_bias;
        head
    }

    #[test]
    fn zero_weights_give_sigmoid_of_bias() {
        let mut rng = RngState::new(1);
        let mut head = zeroed_head(4, 8, 0.0);
        let input = Tensor3::randn(3, 1, 4, &mut rng);
        let out = head.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert!(out.data().iter().all(|&s| s == 0.5));

        let mut head = zeroed_head(4, 8, 2.0);
        let out = head.forward(&input, Mode::Infer, &mut rng).unwrap();
        let expect = sigmoid(2.0);
        assert!(out.data().iter().all(|&s| (s - expect).abs() < 1e-15));
    }

    #[test]
    fn scores_stay_in_open_interval() {
        let mut rng = RngState::new(2);
        let mut head = zeroed_head(2, 2, 1000.0);
        let input = Tensor3::randn(2, 1, 2, &mut rng);
        let out = head.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert!(out.data().iter().all(|&s| s > 0.0 && s < 1.0));

        let mut head = zeroed_head(2, 2, -1000.0);
        let out = head.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert!(out.data().iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn increasing_final_bias_increases_every_score() {
        let mut rng = RngState::new(3);
        let mut head = MlpHead::new("mlp", 4, 8, &mut rng).unwrap();
        let input = Tensor3::randn(3, 1, 4, &mut rng);
        let base = head.forward(&input, Mode::Infer, &mut rng).unwrap();
        head.w2.bias[0] += 0.5;
        let bumped = head.forward(&input, Mode::Infer, &mut rng).unwrap();
        for (b, a) in bumped.data().iter().zip(base.data()) {
            assert!(b > a);
        }
    }

    #[test]
    fn multi_step_input_rejected() {
        let mut rng = RngState::new(4);
        let mut head = MlpHead::new("mlp", 4, 8, &mut rng).unwrap();
        let input = Tensor3::zeros(2, 3, 4);
        let err = head.forward(&input, Mode::Infer, &mut rng).unwrap_err();
        assert_eq!(err.category(), "dimension");
    }
}

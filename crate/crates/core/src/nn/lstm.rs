//! Single-layer LSTM over the time axis with exact backpropagation through
//! time. Baseline model only; gate order in the stacked weight matrix is
//! input, forget, candidate, output.

use crate::error::{Error, Result};
use crate::nn::mlp::sigmoid;
use crate::nn::{Layer, Mode};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

/// Per-step activations cached for the backward pass, one entry per (b, t).
#[derive(Debug, Clone, Default)]
struct StepCache {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Weights are (4·hidden, in + hidden): each gate reads the concatenation
/// [x_t ; h_{t-1}]. Bias is (4·hidden).
#[derive(Debug)]
pub struct Lstm {
    pub params: LayerParams,
    in_features: usize,
    hidden: usize,
    steps: Vec<StepCache>,
    hidden_seq: Option<Tensor3>,
}

impl Lstm {
    pub fn new(name: &str, in_features: usize, hidden: usize, rng: &mut RngState) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::InvalidArgument {
                what: "lstm hidden width",
                details: "must be at least 1".into(),
            });
        }
        let params = LayerParams::glorot(
            name,
            &[4 * hidden, in_features + hidden],
            4 * hidden,
            in_features + hidden,
            4 * hidden,
            rng,
        );
        Ok(Lstm { params, in_features, hidden, steps: Vec::new(), hidden_seq: None })
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden
    }

    #[inline]
    fn w(&self, row: usize, col: usize) -> f64 {
        self.params.weights[row * (self.in_features + self.hidden) + col]
    }
}

impl Layer for Lstm {
    fn kind(&self) -> &'static str {
        "lstm"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if feat != self.in_features {
            return Err(Error::DimensionMismatch {
                op: "lstm",
                axis: "feature",
                expected: self.in_features,
                got: feat,
            });
        }
        let hs = self.hidden;
        let mut out = Tensor3::zeros(batch, time, hs);
        self.steps = vec![StepCache::default(); batch * time];

        for b in 0..batch {
            let mut h_prev = vec![0.0; hs];
            let mut c_prev = vec![0.0; hs];
            for t in 0..time {
                let mut cache = StepCache {
                    i: vec![0.0; hs],
                    f: vec![0.0; hs],
                    g: vec![0.0; hs],
                    o: vec![0.0; hs],
                    c: vec![0.0; hs],
                    tanh_c: vec![0.0; hs],
                };
                let xi = input.idx(b, t, 0);
                for u in 0..hs {
                    // One pre-activation per gate; rows are stacked i,f,g,o.
                    let mut z = [0.0; 4];
                    for (gate, zv) in z.iter_mut().enumerate() {
                        let row = gate * hs + u;
                        let mut acc = self.params.bias[row];
                        for x in 0..feat {
                            acc += self.w(row, x) * input.data()[xi + x];
                        }
                        for hh in 0..hs {
                            acc += self.w(row, feat + hh) * h_prev[hh];
                        }
                        *zv = acc;
                    }
                    let i = sigmoid(z[0]);
                    let f = sigmoid(z[1]);
                    let g = z[2].tanh();
                    let o = sigmoid(z[3]);
                    let c = f * c_prev[u] + i * g;
                    let tc = c.tanh();
                    cache.i[u] = i;
                    cache.f[u] = f;
                    cache.g[u] = g;
                    cache.o[u] = o;
                    cache.c[u] = c;
                    cache.tanh_c[u] = tc;
                    out.set(b, t, u, o * tc);
                }
                c_prev.copy_from_slice(&cache.c);
                for u in 0..hs {
                    h_prev[u] = out.get(b, t, u);
                }
                self.steps[b * time + t] = cache;
            }
        }
        self.hidden_seq = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let (batch, time, feat) = input.shape();
        let hs = self.hidden;
        let cols = feat + hs;
        let hidden_seq = self
            .hidden_seq
            .take()
            .ok_or_else(|| Error::Configuration("backward before forward".into()))?;

        for b in 0..batch {
            let mut dh_next = vec![0.0; hs];
            let mut dc_next = vec![0.0; hs];
            for t in (0..time).rev() {
                let cache = &self.steps[b * time + t];
                let c_prev: Vec<f64> = if t == 0 {
                    vec![0.0; hs]
                } else {
                    self.steps[b * time + t - 1].c.clone()
                };
                let xi = input.idx(b, t, 0);
                let mut dh_prev = vec![0.0; hs];
                for u in 0..hs {
                    let dh = output.grad()[output.idx(b, t, u)] + dh_next[u];
                    let o = cache.o[u];
                    let tc = cache.tanh_c[u];
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[u];
                    let di = dc * cache.g[u];
                    let df = dc * c_prev[u];
                    let dg = dc * cache.i[u];
                    let do_ = dh * tc;
                    let dz = [
                        di * cache.i[u] * (1.0 - cache.i[u]),
                        df * cache.f[u] * (1.0 - cache.f[u]),
                        dg * (1.0 - cache.g[u] * cache.g[u]),
                        do_ * o * (1.0 - o),
                    ];
                    for (gate, dzv) in dz.iter().enumerate() {
                        if *dzv == 0.0 {
                            continue;
                        }
                        let row = gate * hs + u;
                        self.params.bias_grad[row] += dzv;
                        let wrow = row * cols;
                        for x in 0..feat {
                            self.params.weight_grad[wrow + x] += dzv * input.data()[xi + x];
                            input.grad_mut()[xi + x] += dzv * self.params.weights[wrow + x];
                        }
                        if t > 0 {
                            for hh in 0..hs {
                                let h_prev = hidden_seq.get(b, t - 1, hh);
                                self.params.weight_grad[wrow + feat + hh] += dzv * h_prev;
                                dh_prev[hh] += dzv * self.params.weights[wrow + feat + hh];
                            }
                        }
                    }
                    dc_next[u] = dc * cache.f[u];
                }
                dh_next = dh_prev;
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

    #[test]
    fn zero_params_zero_hidden_states() {
        let mut rng = RngState::new(0);
        let mut lstm = Lstm::new("lstm", 3, 4, &mut rng).unwrap();
        lstm.params.weights.iter_mut().for_each(|w| *w = 0.0);
        let input = Tensor3::randn(2, 5, 3, &mut rng);
        let out = lstm.forward(&input, Mode::Infer, &mut rng).unwrap();
        // sigmoid(0)·tanh(0) = 0 at every step.
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_step_matches_hand_unrolled_cell() {
        let mut rng = RngState::new(1);
        let mut lstm = Lstm::new("lstm", 2, 2, &mut rng).unwrap();
        let input = Tensor3::randn(1, 1, 2, &mut rng);
        let out = lstm.forward(&input, Mode::Infer, &mut rng).unwrap();

        // Hand-unrolled single cell with h_prev = c_prev = 0.
        let x = [input.get(0, 0, 0), input.get(0, 0, 1)];
        let hs = 2;
        for u in 0..hs {
            let pre = |gate: usize| -> f64 {
                let row = gate * hs + u;
                lstm.params.bias[row]
                    + lstm.params.weights[row * 4] * x[0]
                    + lstm.params.weights[row * 4 + 1] * x[1]
            };
            let i = sigmoid(pre(0));
            let f = sigmoid(pre(1));
            let g = pre(2).tanh();
            let o = sigmoid(pre(3));
            let _ = f;
            let c = i * g;
            let expect = o * c.tanh();
            assert!((out.get(0, 0, u) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn feature_mismatch_rejected() {
        let mut rng = RngState::new(2);
        let mut lstm = Lstm::new("lstm", 3, 2, &mut rng).unwrap();
        let input = Tensor3::zeros(1, 4, 5);
        assert_eq!(
            lstm.forward(&input, Mode::Infer, &mut rng).unwrap_err().category(),
            "dimension"
        );
    }
}

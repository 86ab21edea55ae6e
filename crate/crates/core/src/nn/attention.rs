//! Scaled dot-product attention and the multi-head layer built on it.

use crate::error::{Error, Result};
use crate::nn::{affine_backward, affine_forward, Layer, Mode};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

/// Output of one attention application plus the softmax weights needed for
/// the backward pass (and for row-sum checks).
pub struct AttentionOutput {
    pub output: Tensor3,
    /// Row-stochastic weights, laid out (batch, q_time, k_time) row-major.
    pub weights: Vec<f64>,
}

impl AttentionOutput {
    pub fn weight(&self, b: usize, i: usize, j: usize, q_time: usize, k_time: usize) -> f64 {
        self.weights[(b * q_time + i) * k_time + j]
    }
}

fn check_attention_shapes(q: &Tensor3, k: &Tensor3, v: &Tensor3, d_k: usize) -> Result<()> {
    for (name, t) in [("q", q), ("k", k), ("v", v)] {
        if t.feature() != d_k {
            let _ = name;
            return Err(Error::DimensionMismatch {
                op: "scaled_dot_attention",
                axis: "feature",
                expected: d_k,
                got: t.feature(),
            });
        }
    }
    if k.batch() != q.batch() || v.batch() != q.batch() {
        return Err(Error::DimensionMismatch {
            op: "scaled_dot_attention",
            axis: "batch",
            expected: q.batch(),
            got: if k.batch() != q.batch() { k.batch() } else { v.batch() },
        });
    }
    if v.time() != k.time() {
        return Err(Error::DimensionMismatch {
            op: "scaled_dot_attention",
            axis: "time",
            expected: k.time(),
            got: v.time(),
        });
    }
    Ok(())
}

/// softmax(Q·Kᵀ/√d_k)·V per batch, returning the softmax weights as well.
pub fn scaled_dot_attention_full(
    q: &Tensor3,
    k: &Tensor3,
    v: &Tensor3,
    d_k: usize,
) -> Result<AttentionOutput> {
    check_attention_shapes(q, k, v, d_k)?;
    let (batch, q_time, _) = q.shape();
    let k_time = k.time();
    let scale = 1.0 / (d_k as f64).sqrt();

    let mut weights = vec![0.0; batch * q_time * k_time];
    let mut output = Tensor3::zeros(batch, q_time, d_k);
    let mut row = vec![0.0; k_time];
    for b in 0..batch {
        for i in 0..q_time {
            for (j, r) in row.iter_mut().enumerate() {
                let mut dot = 0.0;
                for d in 0..d_k {
                    dot += q.get(b, i, d) * k.get(b, j, d);
                }
                *r = dot * scale;
            }
            // Max-shifted softmax keeps the exponentials bounded.
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for r in row.iter_mut() {
                *r = (*r - m).exp();
                z += *r;
            }
            let wi = (b * q_time + i) * k_time;
            for (j, r) in row.iter().enumerate() {
                weights[wi + j] = r / z;
            }
            for d in 0..d_k {
                let mut acc = 0.0;
                for j in 0..k_time {
                    acc += weights[wi + j] * v.get(b, j, d);
                }
                output.set(b, i, d, acc);
            }
        }
    }
    Ok(AttentionOutput { output, weights })
}

/// Forward-only convenience wrapper around [`scaled_dot_attention_full`].
pub fn scaled_dot_attention(q: &Tensor3, k: &Tensor3, v: &Tensor3, d_k: usize) -> Result<Tensor3> {
    Ok(scaled_dot_attention_full(q, k, v, d_k)?.output)
}

/// Exact backward through softmax and both matrix products. Reads
/// `out_grad`, accumulates into the grad buffers of `q`, `k`, and `v`.
pub fn scaled_dot_attention_backward(
    q: &mut Tensor3,
    k: &mut Tensor3,
    v: &mut Tensor3,
    weights: &[f64],
    out_grad: &[f64],
) {
    let (batch, q_time, d_k) = q.shape();
    let k_time = k.time();
    let scale = 1.0 / (d_k as f64).sqrt();

    let mut dw = vec![0.0; k_time];
    for b in 0..batch {
        for i in 0..q_time {
            let wi = (b * q_time + i) * k_time;
            let oi = (b * q_time + i) * d_k;
            // dV and dW = dOut·Vᵀ.
            for (j, dwj) in dw.iter_mut().enumerate() {
                let mut acc = 0.0;
                for d in 0..d_k {
                    let g = out_grad[oi + d];
                    acc += g * v.get(b, j, d);
                    let vi = v.idx(b, j, d);
                    v.grad_mut()[vi] += weights[wi + j] * g;
                }
                *dwj = acc;
            }
            // Softmax Jacobian: ds_j = w_j (dw_j - Σ w dw).
            let dot: f64 = (0..k_time).map(|j| weights[wi + j] * dw[j]).sum();
            for (j, dwj) in dw.iter().enumerate() {
                let ds = weights[wi + j] * (dwj - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for d in 0..d_k {
                    let qi = q.idx(b, i, d);
                    let ki = k.idx(b, j, d);
                    q.grad_mut()[qi] += ds * k.data()[ki];
                    k.grad_mut()[ki] += ds * q.data()[qi];
                }
            }
        }
    }
}

#[derive(Debug)]
struct HeadCache {
    q: Tensor3,
    k: Tensor3,
    v: Tensor3,
    weights: Vec<f64>,
}

/// Multi-head self-attention: per head project the input to Q, K, V of
/// `head_size` width, attend, concatenate the heads, and project back to the
/// input width through W_O.
#[derive(Debug)]
pub struct MultiHeadAttention {
    heads: usize,
    head_size: usize,
    model_dim: usize,
    /// Layout: [q0, k0, v0, q1, k1, v1, ..., w_o]; 3·heads+1 parameter sets.
    params: Vec<LayerParams>,
    cache: Vec<HeadCache>,
    concat: Option<Tensor3>,
}

impl MultiHeadAttention {
    pub fn new(
        name: &str,
        model_dim: usize,
        heads: usize,
        head_size: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        if heads == 0 || head_size == 0 {
            return Err(Error::InvalidArgument {
                what: "attention heads",
                details: "heads and head_size must be at least 1".into(),
            });
        }
        let mut params = Vec::with_capacity(3 * heads + 1);
        for h in 0..heads {
            for proj in ["q", "k", "v"] {
                params.push(LayerParams::glorot(
                    &format!("{name}.{proj}{h}"),
                    &[model_dim, head_size],
                    head_size,
                    model_dim,
                    head_size,
                    rng,
                ));
            }
        }
        params.push(LayerParams::glorot(
            &format!("{name}.w_o"),
            &[heads * head_size, model_dim],
            model_dim,
            heads * head_size,
            model_dim,
            rng,
        ));
        Ok(MultiHeadAttention { heads, head_size, model_dim, params, cache: Vec::new(), concat: None })
    }

    /// Wraps an explicit parameter set; exactly 3·heads+1 projections required.
    pub fn from_params(
        params: Vec<LayerParams>,
        model_dim: usize,
        heads: usize,
        head_size: usize,
    ) -> Result<Self> {
        let expected = 3 * heads + 1;
        if params.len() != expected {
            return Err(Error::Configuration(format!(
                "multi-head attention with {heads} heads needs {expected} projection \
                 matrices, got {}",
                params.len()
            )));
        }
        Ok(MultiHeadAttention { heads, head_size, model_dim, params, cache: Vec::new(), concat: None })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn head_size(&self) -> usize {
        self.head_size
    }
}

impl Layer for MultiHeadAttention {
    fn kind(&self) -> &'static str {
        "multi_head_attention"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if feat != self.model_dim {
            return Err(Error::DimensionMismatch {
                op: "multi_head_attention",
                axis: "feature",
                expected: self.model_dim,
                got: feat,
            });
        }
        let hs = self.head_size;
        let mut concat = Tensor3::zeros(batch, time, self.heads * hs);
        self.cache.clear();
        for h in 0..self.heads {
            let q = affine_forward(input, &self.params[3 * h]);
            let k = affine_forward(input, &self.params[3 * h + 1]);
            let v = affine_forward(input, &self.params[3 * h + 2]);
            let attn = scaled_dot_attention_full(&q, &k, &v, hs)?;
            for b in 0..batch {
                for t in 0..time {
                    for d in 0..hs {
                        concat.set(b, t, h * hs + d, attn.output.get(b, t, d));
                    }
                }
            }
            self.cache.push(HeadCache { q, k, v, weights: attn.weights });
        }
        let out = affine_forward(&concat, &self.params[3 * self.heads]);
        self.concat = Some(concat);
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let (batch, time, _) = input.shape();
        let hs = self.head_size;
        let mut concat = self
            .concat
            .take()
            .ok_or_else(|| Error::Configuration("backward before forward".into()))?;
        affine_backward(&mut concat, &mut self.params[3 * self.heads], output);

        for (h, cache) in self.cache.iter_mut().enumerate() {
            // Slice this head's gradient out of the concatenated tensor.
            let mut head_grad = vec![0.0; batch * time * hs];
            for b in 0..batch {
                for t in 0..time {
                    for d in 0..hs {
                        head_grad[(b * time + t) * hs + d] =
                            concat.grad()[concat.idx(b, t, h * hs + d)];
                    }
                }
            }
            scaled_dot_attention_backward(
                &mut cache.q,
                &mut cache.k,
                &mut cache.v,
                &cache.weights,
                &head_grad,
            );
            // Q, K, V grads flow back through the input projections.
            for (proj, t) in [(&cache.q, 0), (&cache.k, 1), (&cache.v, 2)] {
                let mut ghost = Tensor3::zeros(batch, time, hs);
                ghost.grad_mut().copy_from_slice(proj.grad());
                affine_backward(input, &mut self.params[3 * h + t], &ghost);
            }
        }
        self.cache.clear();
        Ok(())
    }

    fn params(&self) -> Vec<&LayerParams> {
        self.params.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        self.params.iter_mut().collect()
    }
}

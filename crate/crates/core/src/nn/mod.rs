//! Neural layers with exact analytic reverse-mode gradients.
//!
//! Every layer implements [`Layer`]: `forward` maps an input tensor to an
//! output tensor (caching whatever the backward pass needs), and `backward`
//! reads the gradient stored in the output tensor and accumulates gradients
//! into the input tensor and the layer's own parameters. Architectures are
//! fixed chains of layers, so no general tape is needed; a model keeps its
//! activation tensors alive and walks the chain in reverse.

mod attention;
mod block;
mod conv;
mod dropout;
mod feedforward;
mod loss;
mod lstm;
mod mlp;
mod norm;
mod pool;

pub use attention::{
    scaled_dot_attention, scaled_dot_attention_full, AttentionOutput, MultiHeadAttention,
};
pub use block::TransformerBlock;
pub use conv::Conv1d;
pub use dropout::Dropout;
pub use feedforward::FeedForward;
pub use loss::{bce_loss, LossGrad};
pub use lstm::Lstm;
pub use mlp::MlpHead;
pub use norm::{layer_norm_stats, residual_add, LayerNorm};
pub use pool::{GlobalAvgPool, LastStep, MaxPool1d};

use crate::error::Result;
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

/// Whether dropout is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A differentiable layer in a fixed chain.
pub trait Layer {
    /// Stable tag for diagnostics and shape queries ("conv1d", "max_pool", ...).
    fn kind(&self) -> &'static str;

    /// Computes the output and caches whatever `backward` will need.
    fn forward(&mut self, input: &Tensor3, mode: Mode, rng: &mut RngState) -> Result<Tensor3>;

    /// Reads `output.grad()` and accumulates into `input.grad_mut()` and the
    /// layer's parameter gradients. Must follow the matching `forward`.
    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()>;

    fn params(&self) -> Vec<&LayerParams> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        Vec::new()
    }
}

/// Position-wise affine map: `out[b,t,:] = x[b,t,:] · W + bias`, with
/// `W` stored as (in_features, out_features).
pub(crate) fn affine_forward(x: &Tensor3, p: &LayerParams) -> Tensor3 {
    let (batch, time, in_f) = x.shape();
    debug_assert_eq!(p.weight_shape, vec![in_f, p.bias.len()]);
    let out_f = p.bias.len();
    let mut out = Tensor3::zeros(batch, time, out_f);
    for b in 0..batch {
        for t in 0..time {
            let xi = x.idx(b, t, 0);
            let oi = out.idx(b, t, 0);
            for o in 0..out_f {
                let mut acc = p.bias[o];
                for i in 0..in_f {
                    acc += x.data()[xi + i] * p.weights[i * out_f + o];
                }
                out.data_mut()[oi + o] = acc;
            }
        }
    }
    out
}

/// Backward of [`affine_forward`]: accumulates into `x.grad`, `p.weight_grad`,
/// and `p.bias_grad` from `out.grad`.
pub(crate) fn affine_backward(x: &mut Tensor3, p: &mut LayerParams, out: &Tensor3) {
    let (batch, time, in_f) = x.shape();
    let out_f = p.bias.len();
    for b in 0..batch {
        for t in 0..time {
            let xi = x.idx(b, t, 0);
            let oi = out.idx(b, t, 0);
            for o in 0..out_f {
                let g = out.grad()[oi + o];
                if g == 0.0 {
                    continue;
                }
                p.bias_grad[o] += g;
                for i in 0..in_f {
                    p.weight_grad[i * out_f + o] += g * x.data()[xi + i];
                    x.grad_mut()[xi + i] += g * p.weights[i * out_f + o];
                }
            }
        }
    }
}

/// Shape-equality guard shared by the elementwise ops.
pub(crate) fn check_same_shape(op: &'static str, a: &Tensor3, b: &Tensor3) -> Result<()> {
    use crate::error::Error;
    let (ab, at, af) = a.shape();
    let (bb, bt, bf) = b.shape();
    if ab != bb {
        return Err(Error::DimensionMismatch { op, axis: "batch", expected: ab, got: bb });
    }
    if at != bt {
        return Err(Error::DimensionMismatch { op, axis: "time", expected: at, got: bt });
    }
    if af != bf {
        return Err(Error::DimensionMismatch { op, axis: "feature", expected: af, got: bf });
    }
    Ok(())
}

//! Post-norm transformer encoder block:
//! x → MHA → dropout → add → layer_norm → FFN → dropout → add → layer_norm.

use crate::error::{Error, Result};
use crate::nn::{
    residual_add, Dropout, FeedForward, Layer, LayerNorm, Mode, MultiHeadAttention,
};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

#[derive(Debug)]
pub struct TransformerBlock {
    mha: MultiHeadAttention,
    drop_attn: Dropout,
    norm1: LayerNorm,
    ffn: FeedForward,
    drop_ffn: Dropout,
    norm2: LayerNorm,
    /// Forward intermediates [attn, dropped_attn, sum1, normed1, ffn_out,
    /// dropped_ffn, sum2], kept for the reverse walk.
    acts: Vec<Tensor3>,
}

impl TransformerBlock {
    pub fn new(
        name: &str,
        model_dim: usize,
        heads: usize,
        head_size: usize,
        ff_dim: usize,
        dropout_rate: f64,
        rng: &mut RngState,
    ) -> Result<Self> {
        Ok(TransformerBlock {
            mha: MultiHeadAttention::new(&format!("{name}.mha"), model_dim, heads, head_size, rng)?,
            drop_attn: Dropout::new(dropout_rate)?,
            norm1: LayerNorm::new(&format!("{name}.norm1"), model_dim),
            ffn: FeedForward::new(&format!("{name}.ffn"), model_dim, ff_dim, rng)?,
            drop_ffn: Dropout::new(dropout_rate)?,
            norm2: LayerNorm::new(&format!("{name}.norm2"), model_dim),
            acts: Vec::new(),
        })
    }
}

impl Layer for TransformerBlock {
    fn kind(&self) -> &'static str {
        "transformer_block"
    }

    fn forward(&mut self, input: &Tensor3, mode: Mode, rng: &mut RngState) -> Result<Tensor3> {
        let attn = self.mha.forward(input, mode, rng)?;
        let dropped_attn = self.drop_attn.forward(&attn, mode, rng)?;
        let sum1 = residual_add(input, &dropped_attn)?;
        let normed1 = self.norm1.forward(&sum1, mode, rng)?;
        let ffn_out = self.ffn.forward(&normed1, mode, rng)?;
        let dropped_ffn = self.drop_ffn.forward(&ffn_out, mode, rng)?;
        let sum2 = residual_add(&normed1, &dropped_ffn)?;
        let out = self.norm2.forward(&sum2, mode, rng)?;
        self.acts = vec![attn, dropped_attn, sum1, normed1, ffn_out, dropped_ffn, sum2];
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        if self.acts.len() != 7 {
            return Err(Error::Configuration("backward before forward".into()));
        }
        let mut acts = std::mem::take(&mut self.acts);
        let (mut attn, rest) = {
            let mut it = acts.drain(..);
            let attn = it.next().unwrap();
            (attn, it.collect::<Vec<_>>())
        };
        let [mut dropped_attn, mut sum1, mut normed1, mut ffn_out, mut dropped_ffn, mut sum2]: [Tensor3; 6] = rest.try_into().map_err(|_| Error::Configuration("bad cache".into()))?;

        self.norm2.backward(&mut sum2, output)?;
        // Residual: sum2 = normed1 + dropped_ffn distributes its gradient.
        for i in 0..sum2.len() {
            let g = sum2.grad()[i];
            normed1.grad_mut()[i] += g;
            dropped_ffn.grad_mut()[i] += g;
        }
        self.drop_ffn.backward(&mut ffn_out, &dropped_ffn)?;
        self.ffn.backward(&mut normed1, &ffn_out)?;
        self.norm1.backward(&mut sum1, &normed1)?;
        // Residual: sum1 = input + dropped_attn.
        for i in 0..sum1.len() {
            let g = sum1.grad()[i];
            input.grad_mut()[i] += g;
            dropped_attn.grad_mut()[i] += g;
        }
        self.drop_attn.backward(&mut attn, &dropped_attn)?;
        self.mha.backward(input, &attn)?;
        Ok(())
    }

    fn params(&self) -> Vec<&LayerParams> {
        let mut p = self.mha.params();
        p.extend(self.norm1.params());
        p.extend(self.ffn.params());
        p.extend(self.norm2.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        let mut p = self.mha.params_mut();
        p.extend(self.norm1.params_mut());
        p.extend(self.ffn.params_mut());
        p.extend(self.norm2.params_mut());
        p
    }
}

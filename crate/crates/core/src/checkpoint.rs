//! Model checkpoint container: per-layer (name, shape, flat f64 values)
//! plus the model configuration and rng seed. Floats are stored as LE bit
//! patterns, so the write/read round trip is bit-exact.

use crate::error::{Error, Result};
use crate::ioutil::write_atomic;
use crate::models::ModelConfig;
use crate::tensor::LayerParams;
use std::io::Read;
use std::path::Path;

const CHECKPOINT_MAGIC: &[u8; 8] = b"CTCKPT01";

/// Serialized form of one model: configuration plus every parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub layers: Vec<LayerSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSnapshot {
    pub name: String,
    pub weight_shape: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerSnapshot {
    pub fn of(params: &LayerParams) -> LayerSnapshot {
        LayerSnapshot {
            name: params.name.clone(),
            weight_shape: params.weight_shape.clone(),
            weights: params.weights.clone(),
            bias: params.bias.clone(),
        }
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let config = serde_json::to_vec(&self.config)
            .map_err(|e| Error::Container(e.to_string()))?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(config.len() as u64).to_le_bytes());
        buf.extend_from_slice(&config);
        buf.extend_from_slice(&(self.layers.len() as u64).to_le_bytes());
        for layer in &self.layers {
            let name = layer.name.as_bytes();
            buf.extend_from_slice(&(name.len() as u64).to_le_bytes());
            buf.extend_from_slice(name);
            buf.extend_from_slice(&(layer.weight_shape.len() as u64).to_le_bytes());
            for d in &layer.weight_shape {
                buf.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            buf.extend_from_slice(&(layer.weights.len() as u64).to_le_bytes());
            for v in &layer.weights {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&(layer.bias.len() as u64).to_le_bytes());
            for v in &layer.bias {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            if *off + n > buf.len() {
                return Err(Error::Container("truncated checkpoint".into()));
            }
            let s = &buf[*off..*off + n];
            *off += n;
            Ok(s)
        };
        if take(&mut off, CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Container("bad checkpoint magic".into()));
        }
        let u64_at = |off: &mut usize| -> Result<u64> {
            Ok(u64::from_le_bytes(take(off, 8)?.try_into().expect("8 bytes")))
        };
        let config_len = u64_at(&mut off)? as usize;
        let config: ModelConfig = serde_json::from_slice(take(&mut off, config_len)?)
            .map_err(|e| Error::Container(format!("bad checkpoint config: {e}")))?;
        let n_layers = u64_at(&mut off)? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let name_len = u64_at(&mut off)? as usize;
            let name = String::from_utf8(take(&mut off, name_len)?.to_vec())
                .map_err(|e| Error::Container(format!("bad layer name: {e}")))?;
            let ndim = u64_at(&mut off)? as usize;
            let mut weight_shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                weight_shape.push(u64_at(&mut off)? as usize);
            }
            let n_w = u64_at(&mut off)? as usize;
            let mut weights = Vec::with_capacity(n_w);
            for _ in 0..n_w {
                weights
                    .push(f64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")));
            }
            let n_b = u64_at(&mut off)? as usize;
            let mut bias = Vec::with_capacity(n_b);
            for _ in 0..n_b {
                bias.push(f64::from_le_bytes(take(&mut off, 8)?.try_into().expect("8 bytes")));
            }
            layers.push(LayerSnapshot { name, weight_shape, weights, bias });
        }
        Ok(Checkpoint { config, layers })
    }
}

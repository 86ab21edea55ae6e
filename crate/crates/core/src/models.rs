//! Model assembly: the CTranATD detector (CNN front-end feeding a
//! transformer encoder) and the CNN-only, transformer-only, and LSTM
//! baselines, all built from the same layer set under per-attack presets.

use crate::checkpoint::{Checkpoint, LayerSnapshot};
use crate::error::{Error, Result};
use crate::gradcheck::Fragment;
use crate::nn::{
    Conv1d, Dropout, GlobalAvgPool, LastStep, Layer, Lstm, MaxPool1d, MlpHead, Mode,
    TransformerBlock,
};
use crate::preprocess::{ENCODED_DIM, WINDOW_LEN};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Ctranatd,
    Cnn,
    Transformer,
    Lstm,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Ctranatd,
        Architecture::Cnn,
        Architecture::Transformer,
        Architecture::Lstm,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Ctranatd => "ctranatd",
            Architecture::Cnn => "cnn",
            Architecture::Transformer => "transformer",
            Architecture::Lstm => "lstm",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Architecture> {
        match tag {
            "ctranatd" => Some(Architecture::Ctranatd),
            "cnn" => Some(Architecture::Cnn),
            "transformer" => Some(Architecture::Transformer),
            "lstm" => Some(Architecture::Lstm),
            _ => None,
        }
    }
}

/// Which attack's hyperparameter row to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackPreset {
    Dos,
    Ddos,
    PortScan,
}

impl AttackPreset {
    pub const ALL: [AttackPreset; 3] =
        [AttackPreset::Dos, AttackPreset::Ddos, AttackPreset::PortScan];

    pub fn tag(&self) -> &'static str {
        match self {
            AttackPreset::Dos => "dos",
            AttackPreset::Ddos => "ddos",
            AttackPreset::PortScan => "portscan",
        }
    }

    pub fn from_tag(tag: &str) -> Option<AttackPreset> {
        match tag {
            "dos" => Some(AttackPreset::Dos),
            "ddos" => Some(AttackPreset::Ddos),
            "portscan" => Some(AttackPreset::PortScan),
            _ => None,
        }
    }

    /// Per-attack convolution kernel; everything else is shared.
    pub fn cnn_kernel(&self) -> usize {
        match self {
            AttackPreset::Dos => 5,
            AttackPreset::Ddos => 3,
            AttackPreset::PortScan => 3,
        }
    }
}

/// Full hyperparameter set for one model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub attack_preset: AttackPreset,
    pub window: usize,
    pub features: usize,
    pub cnn_filters: usize,
    pub cnn_kernel: usize,
    pub pool_size: usize,
    pub head_size: usize,
    pub head_number: usize,
    pub ff_dim: usize,
    pub transformer_blocks: usize,
    pub mlp_hidden: usize,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub lstm_hidden: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// The per-attack hyperparameter rows: kernel 5 for DoS, 3 for DDoS and
    /// PortScan; pool 2, head size 4, 2 heads, feedforward 64, one
    /// transformer block, MLP 64, dropout 0.1, batch 32, 64 filters.
    pub fn preset(attack: AttackPreset, architecture: Architecture, seed: u64) -> ModelConfig {
        ModelConfig {
            architecture,
            attack_preset: attack,
            window: WINDOW_LEN,
            features: ENCODED_DIM,
            cnn_filters: 64,
            cnn_kernel: attack.cnn_kernel(),
            pool_size: 2,
            head_size: 4,
            head_number: 2,
            ff_dim: 64,
            transformer_blocks: 1,
            mlp_hidden: 64,
            dropout_rate: 0.1,
            batch_size: 32,
            lstm_hidden: 64,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive: [(&str, usize); 9] = [
            ("window", self.window),
            ("features", self.features),
            ("cnn_filters", self.cnn_filters),
            ("cnn_kernel", self.cnn_kernel),
            ("pool_size", self.pool_size),
            ("head_size", self.head_size),
            ("head_number", self.head_number),
            ("ff_dim", self.ff_dim),
            ("mlp_hidden", self.mlp_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Configuration(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Configuration(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.cnn_kernel > self.window {
            return Err(Error::Configuration(format!(
                "kernel {} exceeds window {}",
                self.cnn_kernel, self.window
            )));
        }
        Ok(())
    }

    /// Time length entering the transformer block after convolution and
    /// pooling: floor((window − kernel + 1) / pool).
    pub fn transformer_input_len(&self) -> usize {
        (self.window - self.cnn_kernel + 1) / self.pool_size
    }

    /// Model width at the classifier head.
    fn head_width(&self) -> usize {
        match self.architecture {
            Architecture::Ctranatd | Architecture::Cnn => self.cnn_filters,
            Architecture::Transformer => self.features,
            Architecture::Lstm => self.lstm_hidden,
        }
    }

    /// Exact number of learnable scalars, in closed form.
    pub fn parameter_count(&self) -> usize {
        let conv = self.cnn_filters * self.features * self.cnn_kernel + self.cnn_filters;
        let block = |d: usize| {
            let heads = self.head_number * 3 * (d * self.head_size + self.head_size);
            let w_o = self.head_number * self.head_size * d + d;
            let norms = 2 * (2 * d);
            let ffn = d * self.ff_dim + self.ff_dim + self.ff_dim * d + d;
            heads + w_o + norms + ffn
        };
        let mlp = |d: usize| d * self.mlp_hidden + self.mlp_hidden + self.mlp_hidden + 1;
        let lstm = 4 * (self.lstm_hidden * (self.features + self.lstm_hidden) + self.lstm_hidden);
        match self.architecture {
            Architecture::Ctranatd => {
                conv + self.transformer_blocks * block(self.cnn_filters) + mlp(self.cnn_filters)
            }
            Architecture::Cnn => conv + mlp(self.cnn_filters),
            Architecture::Transformer => {
                self.transformer_blocks * block(self.features) + mlp(self.features)
            }
            Architecture::Lstm => lstm + mlp(self.lstm_hidden),
        }
    }
}

/// A built model: ordered layer chain plus the activations of the most
/// recent forward pass (the backward walk needs them).
pub struct Model {
    config: ModelConfig,
    layers: Vec<Box<dyn Layer>>,
    rng: RngState,
    acts: Vec<Tensor3>,
    act_kinds: Vec<&'static str>,
}

impl Model {
    /// Assembles the layer chain for `config.architecture` with seeded
    /// Glorot initialization. Two builds from equal configs are bitwise
    /// identical.
    pub fn build(config: ModelConfig) -> Result<Model> {
        config.validate()?;
        let mut init = RngState::new(config.seed).derive("init");
        let rng = RngState::new(config.seed).derive("dropout");
        let mut layers: Vec<Box<dyn Layer>> = Vec::new();
        match config.architecture {
            Architecture::Ctranatd => {
                layers.push(Box::new(Conv1d::new(
                    "conv",
                    config.features,
                    config.cnn_filters,
                    config.cnn_kernel,
                    &mut init,
                )?));
                layers.push(Box::new(MaxPool1d::new(config.pool_size)?));
                layers.push(Box::new(Dropout::new(config.dropout_rate)?));
                for b in 0..config.transformer_blocks {
                    layers.push(Box::new(TransformerBlock::new(
                        &format!("block{b}"),
                        config.cnn_filters,
                        config.head_number,
                        config.head_size,
                        config.ff_dim,
                        config.dropout_rate,
                        &mut init,
                    )?));
                }
                layers.push(Box::new(GlobalAvgPool));
                layers.push(Box::new(MlpHead::new(
                    "mlp",
                    config.cnn_filters,
                    config.mlp_hidden,
                    &mut init,
                )?));
            }
            Architecture::Cnn => {
                layers.push(Box::new(Conv1d::new(
                    "conv",
                    config.features,
                    config.cnn_filters,
                    config.cnn_kernel,
                    &mut init,
                )?));
                layers.push(Box::new(MaxPool1d::new(config.pool_size)?));
                layers.push(Box::new(Dropout::new(config.dropout_rate)?));
                layers.push(Box::new(GlobalAvgPool));
                layers.push(Box::new(MlpHead::new(
                    "mlp",
                    config.cnn_filters,
                    config.mlp_hidden,
                    &mut init,
                )?));
            }
            Architecture::Transformer => {
                // Raw 71-feature windows feed attention directly.
                for b in 0..config.transformer_blocks {
                    layers.push(Box::new(TransformerBlock::new(
                        &format!("block{b}"),
                        config.features,
                        config.head_number,
                        config.head_size,
                        config.ff_dim,
                        config.dropout_rate,
                        &mut init,
                    )?));
                }
                layers.push(Box::new(GlobalAvgPool));
                layers.push(Box::new(MlpHead::new(
                    "mlp",
                    config.features,
                    config.mlp_hidden,
                    &mut init,
                )?));
            }
            Architecture::Lstm => {
                layers.push(Box::new(Lstm::new(
                    "lstm",
                    config.features,
                    config.lstm_hidden,
                    &mut init,
                )?));
                layers.push(Box::new(LastStep));
                layers.push(Box::new(MlpHead::new(
                    "mlp",
                    config.lstm_hidden,
                    config.mlp_hidden,
                    &mut init,
                )?));
            }
        }
        Ok(Model { config, layers, rng, acts: Vec::new(), act_kinds: Vec::new() })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Forward pass over a (B, window, features) batch; returns one score in
    /// (0, 1) per batch row. `training` enables dropout.
    pub fn forward(&mut self, batch: &Tensor3, training: bool) -> Result<Vec<f64>> {
        let (_, time, feat) = batch.shape();
        if feat != self.config.features {
            return Err(Error::DimensionMismatch {
                op: "model forward",
                axis: "feature",
                expected: self.config.features,
                got: feat,
            });
        }
        if time != self.config.window {
            return Err(Error::DimensionMismatch {
                op: "model forward",
                axis: "time",
                expected: self.config.window,
                got: time,
            });
        }
        let mode = if training { Mode::Train } else { Mode::Infer };
        let mut input = batch.clone();
        input.zero_grad();
        let mut acts = vec![input];
        let mut kinds = vec!["input"];
        for layer in &mut self.layers {
            let out = layer.forward(acts.last().expect("non-empty"), mode, &mut self.rng)?;
            acts.push(out);
            kinds.push(layer.kind());
        }
        let scores = acts.last().expect("non-empty").data().to_vec();
        self.acts = acts;
        self.act_kinds = kinds;
        Ok(scores)
    }

    /// Backward pass from per-score gradients; must follow `forward`.
    /// Accumulates into every parameter gradient and the stored input's
    /// gradient buffer.
    pub fn backward(&mut self, score_grads: &[f64]) -> Result<()> {
        if self.acts.len() != self.layers.len() + 1 {
            return Err(Error::Configuration("backward before forward".into()));
        }
        let last = self.acts.last_mut().expect("non-empty");
        if score_grads.len() != last.len() {
            return Err(Error::DimensionMismatch {
                op: "model backward",
                axis: "batch",
                expected: last.len(),
                got: score_grads.len(),
            });
        }
        last.grad_mut().copy_from_slice(score_grads);
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let (before, after) = self.acts.split_at_mut(i + 1);
            layer.backward(&mut before[i], &after[0])?;
        }
        Ok(())
    }

    /// Gradient of the most recent backward pass with respect to the input.
    pub fn input_grad(&self) -> Option<&[f64]> {
        self.acts.first().map(|t| t.grad())
    }

    /// (layer kind, output shape) pairs recorded by the latest forward.
    pub fn activation_shapes(&self) -> Vec<(&'static str, (usize, usize, usize))> {
        self.act_kinds.iter().zip(&self.acts).map(|(k, t)| (*k, t.shape())).collect()
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                p.zero_grads();
            }
        }
    }

    pub fn params(&self) -> Vec<&LayerParams> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    /// Actual learnable scalar count; equals `config.parameter_count()`.
    pub fn parameter_total(&self) -> usize {
        self.params().iter().map(|p| p.count()).sum()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            layers: self.params().iter().map(|p| LayerSnapshot::of(p)).collect(),
        }
    }

    /// Rebuilds the architecture from the stored config and copies every
    /// parameter set back by name and shape.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Model> {
        let mut model = Model::build(ckpt.config.clone())?;
        let mut params = model.params_mut();
        if params.len() != ckpt.layers.len() {
            return Err(Error::Container(format!(
                "checkpoint has {} parameter sets, model needs {}",
                ckpt.layers.len(),
                params.len()
            )));
        }
        for (p, snap) in params.iter_mut().zip(&ckpt.layers) {
            if p.name != snap.name || p.weight_shape != snap.weight_shape {
                return Err(Error::Container(format!(
                    "checkpoint layer {:?} {:?} does not match model layer {:?} {:?}",
                    snap.name, snap.weight_shape, p.name, p.weight_shape
                )));
            }
            if p.weights.len() != snap.weights.len() || p.bias.len() != snap.bias.len() {
                return Err(Error::Container(format!(
                    "checkpoint layer {:?} has wrong value counts",
                    snap.name
                )));
            }
            p.weights.copy_from_slice(&snap.weights);
            p.bias.copy_from_slice(&snap.bias);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Scores one flat row-major window; the relay's detector entry point.
    pub fn score_window(&mut self, window: &[f64], rows: usize, cols: usize) -> Result<f64> {
        let tensor = Tensor3::from_vec(1, rows, cols, window.to_vec())?;
        Ok(self.forward(&tensor, false)?[0])
    }
}

/// Whole-model fragment for gradient checking: loss = Σ cᵦ·scoreᵦ with
/// dropout off.
pub struct ModelProbe {
    model: Model,
    coeffs: Vec<f64>,
    coeff_seed: u64,
}

impl ModelProbe {
    pub fn new(model: Model, coeff_seed: u64) -> Self {
        ModelProbe { model, coeffs: Vec::new(), coeff_seed }
    }

    fn coeffs_for(&mut self, len: usize) -> Vec<f64> {
        if self.coeffs.len() != len {
            let mut rng = RngState::new(self.coeff_seed).derive("model-probe");
            self.coeffs = (0..len).map(|_| rng.normal()).collect();
        }
        self.coeffs.clone()
    }
}

impl Fragment for ModelProbe {
    fn name(&self) -> String {
        format!("{}-full", self.model.config().architecture.tag())
    }

    fn loss(&mut self, input: &Tensor3) -> Result<f64> {
        let scores = self.model.forward(input, false)?;
        let coeffs = self.coeffs_for(scores.len());
        Ok(scores.iter().zip(&coeffs).map(|(s, c)| s * c).sum())
    }

    fn loss_backward(&mut self, input: &mut Tensor3) -> Result<f64> {
        self.model.zero_grads();
        input.zero_grad();
        let scores = self.model.forward(input, false)?;
        let coeffs = self.coeffs_for(scores.len());
        let loss = scores.iter().zip(&coeffs).map(|(s, c)| s * c).sum();
        self.model.backward(&coeffs)?;
        input.grad_mut().copy_from_slice(self.model.input_grad().expect("forward ran"));
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        self.model.params_mut()
    }
}

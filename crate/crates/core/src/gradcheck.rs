//! Central finite-difference verification of every analytic gradient.
//!
//! A [`Fragment`] is any differentiable piece (single layer or whole model)
//! reduced to a scalar loss. The checker perturbs each parameter and input
//! scalar by ±h and compares the resulting slope against the gradient the
//! backward pass produced.

use crate::error::Result;
use crate::nn::{Layer, Mode};
use crate::tensor::{LayerParams, Tensor3};
use crate::RngState;

/// Step used for all finite-difference probes.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor so near-zero gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// A differentiable piece reduced to a scalar loss.
pub trait Fragment {
    fn name(&self) -> String;

    /// Pure forward evaluation; must be deterministic in (params, input).
    fn loss(&mut self, input: &Tensor3) -> Result<f64>;

    /// Zeroes gradients, runs forward and backward, leaves the gradients in
    /// `input.grad` and the parameter buffers, and returns the loss.
    fn loss_backward(&mut self, input: &mut Tensor3) -> Result<f64>;

    fn params_mut(&mut self) -> Vec<&mut LayerParams>;
}

/// One checked gradient buffer.
#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub target: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

/// Outcome of checking one fragment.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub fragment: String,
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

enum Target {
    Weights(usize),
    Bias(usize),
    Input,
}

/// Compares every analytic parameter and input gradient of `fragment`
/// against central finite differences at `input`.
pub fn grad_check(
    fragment: &mut dyn Fragment,
    input: &Tensor3,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let mut probe_input = input.clone();
    probe_input.zero_grad();
    fragment.loss_backward(&mut probe_input)?;

    // Snapshot the analytic gradients before the FD probes overwrite state.
    let param_grads: Vec<(String, Vec<f64>, Vec<f64>)> = fragment
        .params_mut()
        .iter()
        .map(|p| (p.name.clone(), p.weight_grad.clone(), p.bias_grad.clone()))
        .collect();
    let input_grad = probe_input.grad().to_vec();

    let mut targets: Vec<(Target, String, usize)> = Vec::new();
    for (set, (name, wg, bg)) in param_grads.iter().enumerate() {
        targets.push((Target::Weights(set), format!("{name}.weights"), wg.len()));
        targets.push((Target::Bias(set), format!("{name}.bias"), bg.len()));
    }
    targets.push((Target::Input, "input".into(), input_grad.len()));

    let mut entries = Vec::new();
    let mut work_input = input.clone();
    for (target, label, len) in targets {
        let mut max_rel: f64 = 0.0;
        for i in 0..len {
            let analytic = match &target {
                Target::Weights(s) => param_grads[*s].1[i],
                Target::Bias(s) => param_grads[*s].2[i],
                Target::Input => input_grad[i],
            };
            let nudge = |frag: &mut dyn Fragment, inp: &mut Tensor3, delta: f64| match &target {
                Target::Weights(s) => frag.params_mut()[*s].weights[i] += delta,
                Target::Bias(s) => frag.params_mut()[*s].bias[i] += delta,
                Target::Input => inp.data_mut()[i] += delta,
            };
            nudge(fragment, &mut work_input, FD_STEP);
            let plus = fragment.loss(&work_input)?;
            nudge(fragment, &mut work_input, -2.0 * FD_STEP);
            let minus = fragment.loss(&work_input)?;
            nudge(fragment, &mut work_input, FD_STEP);
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            max_rel = max_rel.max(relative_error(analytic, numeric));
        }
        entries.push(GradCheckEntry { target: label, checked: len, max_rel_error: max_rel });
    }

    let max_rel_error = entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { fragment: fragment.name(), entries, max_rel_error, tolerance })
}

/// Wraps a single layer into a fragment: loss = Σ cᵢ·outᵢ with fixed
/// pseudo-random coefficients, so every output position contributes.
pub struct LayerProbe<L: Layer> {
    layer: L,
    label: String,
    coeffs: Vec<f64>,
    coeff_seed: u64,
    rng: RngState,
}

impl<L: Layer> LayerProbe<L> {
    pub fn new(layer: L, label: &str, coeff_seed: u64) -> Self {
        LayerProbe {
            layer,
            label: label.to_string(),
            coeffs: Vec::new(),
            coeff_seed,
            rng: RngState::new(coeff_seed),
        }
    }

    pub fn layer_mut(&mut self) -> &mut L {
        &mut self.layer
    }

    fn coeffs_for(&mut self, len: usize) -> &[f64] {
        if self.coeffs.len() != len {
            let mut rng = RngState::new(self.coeff_seed).derive("probe-coeffs");
            self.coeffs = (0..len).map(|_| rng.normal()).collect();
        }
        &self.coeffs
    }
}

impl<L: Layer> Fragment for LayerProbe<L> {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn loss(&mut self, input: &Tensor3) -> Result<f64> {
        let out = self.layer.forward(input, Mode::Infer, &mut self.rng)?;
        let coeffs = self.coeffs_for(out.len());
        Ok(out.data().iter().zip(coeffs).map(|(o, c)| o * c).sum())
    }

    fn loss_backward(&mut self, input: &mut Tensor3) -> Result<f64> {
        for p in self.layer.params_mut() {
            p.zero_grads();
        }
        input.zero_grad();
        let mut out = self.layer.forward(input, Mode::Infer, &mut self.rng)?;
        let coeffs = self.coeffs_for(out.len()).to_vec();
        let loss = out.data().iter().zip(&coeffs).map(|(o, c)| o * c).sum();
        out.grad_mut().copy_from_slice(&coeffs);
        self.layer.backward(input, &out)?;
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<&mut LayerParams> {
        self.layer.params_mut()
    }
}

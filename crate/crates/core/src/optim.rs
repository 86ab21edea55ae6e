//! Adam optimizer with bias correction. Moment buffers live in the
//! optimizer, keyed by position in the model's parameter list, and persist
//! across steps.

use crate::error::{Error, Result};
use crate::tensor::LayerParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        AdamConfig { learning_rate, ..AdamConfig::default() }
    }
}

struct Moments {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

pub struct Adam {
    cfg: AdamConfig,
    step: usize,
    moments: Vec<Moments>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, step: 0, moments: Vec::new() }
    }

    /// Completed update steps.
    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One in-place update over every parameter set. The parameter list must
    /// keep the same order and shapes across calls. Rejects the whole step if
    /// any gradient is non-finite, naming the offending layer.
    pub fn step(&mut self, params: &mut [&mut LayerParams]) -> Result<()> {
        for p in params.iter() {
            if !p.grads_finite() {
                return Err(Error::NonFiniteGradient { layer: p.name.clone() });
            }
        }
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    m_w: vec![0.0; p.weights.len()],
                    v_w: vec![0.0; p.weights.len()],
                    m_b: vec![0.0; p.bias.len()],
                    v_b: vec![0.0; p.bias.len()],
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::Configuration(format!(
                "optimizer saw {} parameter sets, expected {}",
                params.len(),
                self.moments.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.cfg.beta1.powi(t);
        let c2 = 1.0 - self.cfg.beta2.powi(t);
        for (p, mom) in params.iter_mut().zip(&mut self.moments) {
            update(
                &mut p.weights,
                &p.weight_grad,
                &mut mom.m_w,
                &mut mom.v_w,
                &self.cfg,
                c1,
                c2,
            );
            update(&mut p.bias, &p.bias_grad, &mut mom.m_b, &mut mom.v_b, &self.cfg, c1, c2);
        }
        Ok(())
    }
}

fn update(
    values: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    cfg: &AdamConfig,
    c1: f64,
    c2: f64,
) {
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(value: f64, grad: f64) -> LayerParams {
        let mut p = LayerParams::zeros("scalar", &[1], 0);
        p.weights[0] = value;
        p.weight_grad[0] = grad;
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = scalar_param(3.25, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.weights[0], 3.25);
    }

    #[test]
    fn first_step_matches_hand_evaluated_recurrence() {
        // m̂ = v̂ = 1 after one step on constant gradient 1, so the update
        // is lr/(1+eps) ≈ lr.
        let mut p = scalar_param(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.1));
        adam.step(&mut [&mut p]).unwrap();
        assert!((p.weights[0] - (-0.1)).abs() < 1e-8, "{}", p.weights[0]);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut p1 = scalar_param(1.0, 0.5);
        let mut p2 = scalar_param(1.0, 0.5);
        let mut a1 = Adam::new(AdamConfig::default());
        let mut a2 = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            a1.step(&mut [&mut p1]).unwrap();
            a2.step(&mut [&mut p2]).unwrap();
        }
        assert_eq!(p1.weights[0], p2.weights[0]);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let mut p = scalar_param(1.0, f64::NAN);
        let mut adam = Adam::new(AdamConfig::default());
        let err = adam.step(&mut [&mut p]).unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient { layer: "scalar".into() });
        // Step aborted: parameter untouched, counter not advanced.
        assert_eq!(p.weights[0], 1.0);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn moments_persist_across_calls() {
        let mut p = scalar_param(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.1));
        adam.step(&mut [&mut p]).unwrap();
        let after_one = p.weights[0];
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(adam.step_count(), 2);
        // Second step moves further in the same direction.
        assert!(p.weights[0] < after_one);
    }
}

//! Inverted dropout: survivors are scaled by 1/(1-rate) during training so
//! inference is the identity.

use crate::error::{Error, Result};
use crate::nn::{Layer, Mode};
use crate::tensor::Tensor3;
use crate::RngState;

#[derive(Debug)]
pub struct Dropout {
    rate: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument {
                what: "dropout rate",
                details: format!("{rate} is outside [0, 1)"),
            });
        }
        Ok(Dropout { rate, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl Layer for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(&mut self, input: &Tensor3, mode: Mode, rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if mode == Mode::Infer || self.rate == 0.0 {
            self.mask = None;
            return Ok(Tensor3::from_vec(batch, time, feat, input.data().to_vec())
                .expect("same shape"));
        }
        let keep_scale = 1.0 / (1.0 - self.rate);
        let mask: Vec<f64> = (0..input.len())
            .map(|_| if rng.uniform() < self.rate { 0.0 } else { keep_scale })
            .collect();
        let data = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        self.mask = Some(mask);
        Ok(Tensor3::from_vec(batch, time, feat, data).expect("same shape"))
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        match &self.mask {
            Some(mask) => {
                for ((gi, go), m) in input.grad_mut().iter_mut().zip(output.grad()).zip(mask) {
                    *gi += go * m;
                }
            }
            None => {
                for (gi, go) in input.grad_mut().iter_mut().zip(output.grad()) {
                    *gi += go;
                }
            }
        }
        Ok(())
    }
}

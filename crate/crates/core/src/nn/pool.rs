//! Pooling layers: non-overlapping time max-pool, global average pool, and
//! the last-step readout used by the LSTM baseline.

use crate::error::{Error, Result};
use crate::nn::{Layer, Mode};
use crate::tensor::Tensor3;
use crate::RngState;

/// Max over non-overlapping windows of `pool_size` along the time axis.
/// Output time length is `floor(time / pool_size)`; a shorter tail is dropped.
#[derive(Debug)]
pub struct MaxPool1d {
    pool_size: usize,
}

impl MaxPool1d {
    pub fn new(pool_size: usize) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::InvalidArgument {
                what: "pool_size",
                details: "must be at least 1".into(),
            });
        }
        Ok(MaxPool1d { pool_size })
    }

    pub fn out_time(&self, in_time: usize) -> usize {
        in_time / self.pool_size
    }

    /// First-occurrence argmax inside one pool window.
    fn argmax(&self, input: &Tensor3, b: usize, t_out: usize, f: usize) -> usize {
        let start = t_out * self.pool_size;
        let mut best = start;
        let mut best_v = input.get(b, start, f);
        for i in 1..self.pool_size {
            let v = input.get(b, start + i, f);
            if v > best_v {
                best_v = v;
                best = start + i;
            }
        }
        best
    }
}

impl Layer for MaxPool1d {
    fn kind(&self) -> &'static str {
        "max_pool"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        let out_time = self.out_time(time);
        let mut out = Tensor3::zeros(batch, out_time, feat);
        for b in 0..batch {
            for t in 0..out_time {
                for f in 0..feat {
                    let m = self.argmax(input, b, t, f);
                    out.set(b, t, f, input.get(b, m, f));
                }
            }
        }
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let (batch, _, feat) = input.shape();
        let out_time = output.time();
        for b in 0..batch {
            for t in 0..out_time {
                for f in 0..feat {
                    // Gradient routes only to the (first) argmax position.
                    let m = self.argmax(input, b, t, f);
                    let gi = input.idx(b, m, f);
                    input.grad_mut()[gi] += output.grad()[output.idx(b, t, f)];
                }
            }
        }
        Ok(())
    }
}

/// Mean over the whole time axis; collapses (B, T, F) to (B, 1, F).
#[derive(Debug)]
pub struct GlobalAvgPool;

impl Layer for GlobalAvgPool {
    fn kind(&self) -> &'static str {
        "global_avg_pool"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if time == 0 {
            return Err(Error::EmptyInput("global_avg_pool: time axis is empty"));
        }
        let mut out = Tensor3::zeros(batch, 1, feat);
        for b in 0..batch {
            for f in 0..feat {
                let mut acc = 0.0;
                for t in 0..time {
                    acc += input.get(b, t, f);
                }
                out.set(b, 0, f, acc / time as f64);
            }
        }
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let (batch, time, feat) = input.shape();
        let scale = 1.0 / time as f64;
        for b in 0..batch {
            for f in 0..feat {
                let g = output.grad()[output.idx(b, 0, f)] * scale;
                for t in 0..time {
                    let gi = input.idx(b, t, f);
                    input.grad_mut()[gi] += g;
                }
            }
        }
        Ok(())
    }
}

/// Keeps only the final time step; the LSTM baseline's classifier readout.
#[derive(Debug)]
pub struct LastStep;

impl Layer for LastStep {
    fn kind(&self) -> &'static str {
        "last_step"
    }

    fn forward(&mut self, input: &Tensor3, _mode: Mode, _rng: &mut RngState) -> Result<Tensor3> {
        let (batch, time, feat) = input.shape();
        if time == 0 {
            return Err(Error::EmptyInput("last_step: time axis is empty"));
        }
        let mut out = Tensor3::zeros(batch, 1, feat);
        for b in 0..batch {
            for f in 0..feat {
                out.set(b, 0, f, input.get(b, time - 1, f));
            }
        }
        Ok(out)
    }

    fn backward(&mut self, input: &mut Tensor3, output: &Tensor3) -> Result<()> {
        let (batch, time, feat) = input.shape();
        for b in 0..batch {
            for f in 0..feat {
                let gi = input.idx(b, time - 1, f);
                input.grad_mut()[gi] += output.grad()[output.idx(b, 0, f)];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_of_pairs() {
        let mut rng = RngState::new(0);
        let mut pool = MaxPool1d::new(2).unwrap();
        let input = Tensor3::from_vec(1, 4, 1, vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let out = pool.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.data(), &[3.0, 5.0]);
    }

    #[test]
    fn constant_sequence_stays_constant() {
        let mut rng = RngState::new(0);
        let mut pool = MaxPool1d::new(2).unwrap();
        let input = Tensor3::from_vec(1, 4, 1, vec![7.5; 4]).unwrap();
        let out = pool.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.data(), &[7.5, 7.5]);
    }

    #[test]
    fn short_input_yields_empty_time_axis() {
        let mut rng = RngState::new(0);
        let mut pool = MaxPool1d::new(2).unwrap();
        let input = Tensor3::from_vec(1, 1, 1, vec![7.0]).unwrap();
        let out = pool.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.shape(), (1, 0, 1));
        assert!(out.is_empty());
    }

    #[test]
    fn pool_size_zero_rejected() {
        let err = MaxPool1d::new(0).unwrap_err();
        assert_eq!(err.category(), "invalid-argument");
    }

    #[test]
    fn tie_routes_gradient_to_first_occurrence() {
        let mut rng = RngState::new(0);
        let mut pool = MaxPool1d::new(2).unwrap();
        let mut input = Tensor3::from_vec(1, 2, 1, vec![4.0, 4.0]).unwrap();
        let mut out = pool.forward(&input, Mode::Infer, &mut rng).unwrap();
        out.grad_mut()[0] = 1.0;
        pool.backward(&mut input, &out).unwrap();
        assert_eq!(input.grad(), &[1.0, 0.0]);
    }

    #[test]
    fn avg_pool_of_constant_is_constant() {
        let mut rng = RngState::new(0);
        let mut gap = GlobalAvgPool;
        let input = Tensor3::from_vec(1, 3, 2, vec![2.0; 6]).unwrap();
        let out = gap.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.shape(), (1, 1, 2));
        assert_eq!(out.data(), &[2.0, 2.0]);
    }

    #[test]
    fn avg_pool_single_step_is_identity() {
        let mut rng = RngState::new(1);
        let mut gap = GlobalAvgPool;
        let input = Tensor3::randn(2, 1, 3, &mut rng);
        let out = gap.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn avg_pool_arithmetic_mean() {
        let mut rng = RngState::new(0);
        let mut gap = GlobalAvgPool;
        let input = Tensor3::from_vec(1, 3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let out = gap.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.data(), &[2.0]);
    }

    #[test]
    fn avg_pool_empty_time_errors() {
        let mut rng = RngState::new(0);
        let mut gap = GlobalAvgPool;
        let input = Tensor3::zeros(1, 0, 2);
        assert_eq!(
            gap.forward(&input, Mode::Infer, &mut rng).unwrap_err().category(),
            "empty-input"
        );
    }

    #[test]
    fn last_step_picks_final_row() {
        let mut rng = RngState::new(0);
        let mut last = LastStep;
        let input = Tensor3::from_vec(1, 3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = last.forward(&input, Mode::Infer, &mut rng).unwrap();
        assert_eq!(out.data(), &[5.0, 6.0]);
    }
}

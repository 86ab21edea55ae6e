//! Anomaly-traffic detection for UAV flow records: dense-tensor neural
//! layers with exact gradients, the CTranATD model and its baselines,
//! flow-record preprocessing, binary-classification metrics, and a simulated
//! SDN-controller + hash-chained ledger relay.

pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::RngState;
pub use tensor::{LayerParams, Tensor3};

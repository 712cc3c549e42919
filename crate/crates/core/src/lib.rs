//! Train recurrent-network ensembles on neuroscience tasks and measure how
//! far apart their solutions are in behavior, dynamics, and weights.

pub mod behavior;
pub mod dynamics;
pub mod error;
pub mod feature;
pub mod harness;
pub mod rng;
pub mod par;
pub mod probes;
pub mod rnn;
pub mod tasks;
pub mod tensor;
pub mod training;
pub mod weights;

pub use error::{Error, Result};
pub use rnn::{init_params, HiddenTrajectory, Parameterization, RnnParams};
pub use tasks::{TaskKind, TaskSpec, TrialBatch};
pub use tensor::Tensor3;
pub use training::{train, ModelSpec, TrainConfig, TrainReport, TrainedNetwork};

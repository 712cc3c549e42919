//! Loss, gradients, optimizer, schedules and the training loop.

mod adam;
mod bptt;
mod loss;
mod penalty;
mod schedule;
mod trainer;

pub(crate) use adam::adam_update;
pub use adam::Adam;
pub use bptt::{bptt_grads, LossParts};
pub use loss::masked_mse;
pub(crate) use penalty::svd;
pub use penalty::{l1_penalty, nuclear_norm, nuclear_penalty, Regularizer};
pub use schedule::{cosine_lr, LrSchedule, Scheduler};
pub use trainer::{
    default_tau, mup_lr, train, ModelSpec, TrainConfig, TrainFailure, TrainReport, TrainedNetwork,
};

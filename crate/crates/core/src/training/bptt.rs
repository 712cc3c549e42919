use crate::error::{Error, Result};
use crate::rnn::{Gradients, RnnParams};
use crate::tasks::TrialBatch;

use super::loss::masked_mse_with_grad;
use super::penalty::Regularizer;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    /// Masked MSE on the batch.
    pub task: f64,
    pub penalty: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.task + self.penalty
    }
}

/// Full-sequence backpropagation through time on one batch.
///
/// Penalties apply to the recurrent matrix only.
pub fn bptt_grads(
    params: &RnnParams,
    batch: &TrialBatch,
    reg: &Regularizer,
) -> Result<(LossParts, Gradients)> {
    if batch.targets.channels() != params.output_dim() {
        return Err(Error::invalid(format!(
            "targets have {} channels, network outputs {}",
            batch.targets.channels(),
            params.output_dim()
        )));
    }
    let cache = params.unroll(&batch.inputs)?;
    let (task, d_out) = masked_mse_with_grad(&cache.outputs, &batch.targets, &batch.loss_mask)?;
    let mut grads = params.backprop(&cache, &d_out);
    let mut penalty = 0.0;
    if reg.is_active() {
        let (value, sub) = reg.apply(&params.w_h)?;
        penalty = value;
        grads.w_h += sub;
    }
    if !task.is_finite() || !grads.is_finite() {
        return Err(Error::numeric("backward pass", "non-finite loss or gradient"));
    }
    Ok((LossParts { task, penalty }, grads))
}

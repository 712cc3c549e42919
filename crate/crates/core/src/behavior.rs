//! Out-of-distribution behavior and its spread across an ensemble.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::RnnParams;
use crate::tasks::{generate, TaskSpec};
use crate::training::{masked_mse, TrainReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodResult {
    pub network_id: u64,
    pub ood_loss: f64,
    /// Copied from training; only converged networks enter the statistics.
    pub converged: bool,
}

/// Masked MSE of `params` on a seeded batch of `spec_ood`.
pub fn ood_loss(params: &RnnParams, spec_ood: &TaskSpec, seed: u64, batch: usize) -> Result<f64> {
    let data = generate(spec_ood, seed, batch)?;
    let (outputs, _) = params.forward(&data.inputs)?;
    let loss = masked_mse(&outputs, &data.targets, &data.loss_mask)?;
    if !loss.is_finite() {
        return Err(Error::numeric("ood_eval", "non-finite loss"));
    }
    Ok(loss)
}

/// Evaluate a trained network on the shared OOD batch.
pub fn ood_eval(params: &RnnParams, report: &TrainReport, spec_ood: &TaskSpec, seed: u64, batch: usize) -> Result<OodResult> {
    Ok(OodResult {
        network_id: report.seed,
        ood_loss: ood_loss(params, spec_ood, seed, batch)?,
        converged: report.converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorStats {
    /// Population standard deviation of the OOD losses.
    pub sigma: f64,
    pub mean: f64,
    /// Converged networks counted.
    pub n: usize,
}

/// Spread of OOD losses over the converged members.
pub fn behavioral_degeneracy(results: &[OodResult]) -> Result<BehaviorStats> {
    let losses: Vec<f64> = results.iter().filter(|r| r.converged).map(|r| r.ood_loss).collect();
    if losses.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "behavioral degeneracy needs two converged networks, found {}",
            losses.len()
        )));
    }
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    Ok(BehaviorStats {
        sigma: var.sqrt(),
        mean,
        n: losses.len(),
    })
}

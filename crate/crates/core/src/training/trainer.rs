use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};
use crate::rnn::{init_params, Parameterization, RnnParams};
use crate::tasks::{generate, TaskKind, TaskSpec};

use super::adam::Adam;
use super::bptt::bptt_grads;
use super::penalty::Regularizer;
use super::schedule::{LrSchedule, Scheduler};

/// Network architecture: hidden width and parameterization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub width: usize,
    pub parameterization: Parameterization,
}

impl ModelSpec {
    pub fn standard(width: usize) -> Self {
        Self {
            width,
            parameterization: Parameterization::Standard,
        }
    }

    pub fn mup(width: usize, gamma: f64, tau: f64) -> Self {
        Self {
            width,
            parameterization: Parameterization::Mup { gamma, tau },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 {
            return Err(Error::invalid("width must be at least 1"));
        }
        self.parameterization.validate()
    }
}

/// Leak rate used with muP for each task.
pub fn default_tau(kind: &TaskKind) -> f64 {
    match kind {
        TaskKind::NBitFlipFlop(_) | TaskKind::SineWaveGeneration(_) => 1.0,
        TaskKind::DelayedDiscrimination(_) | TaskKind::PathIntegration(_) => 0.1,
    }
}

/// muP learning-rate rule: the base rate scales with `gamma`.
pub fn mup_lr(gamma: f64, lr0: f64) -> f64 {
    gamma * lr0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub scheduler: Scheduler,
    pub max_epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// Epoch-mean loss at or below which an epoch counts as converged.
    pub early_stop_threshold: f64,
    /// Consecutive converged epochs needed to stop.
    pub early_stop_patience: usize,
    #[serde(default)]
    pub regularizer: Regularizer,
    /// Rescale the full gradient to at most this L2 norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
}

impl TrainConfig {
    /// Per-task training defaults.
    pub fn defaults_for(kind: &TaskKind) -> Self {
        let (lr, scheduler, max_epochs, batch_size, early_stop_threshold) = match kind {
            TaskKind::NBitFlipFlop(_) => (1e-3, Scheduler::None, 300, 256, 1e-3),
            TaskKind::DelayedDiscrimination(_) => (
                1e-3,
                Scheduler::CosineAnnealingWarmRestarts {
                    period: 50,
                    min_lr: 0.0,
                },
                500,
                256,
                1e-2,
            ),
            TaskKind::SineWaveGeneration(_) => (5e-4, Scheduler::None, 500, 32, 5e-2),
            TaskKind::PathIntegration(_) => (
                1e-3,
                Scheduler::ReduceOnPlateau {
                    factor: 0.5,
                    patience: 40,
                },
                1000,
                64,
                5e-2,
            ),
        };
        Self {
            lr,
            scheduler,
            max_epochs,
            steps_per_epoch: 128,
            batch_size,
            early_stop_threshold,
            early_stop_patience: 3,
            regularizer: Regularizer::none(),
            grad_clip: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.max_epochs == 0 || self.steps_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::invalid("max_epochs, steps_per_epoch and batch_size must be >= 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::invalid("early_stop_patience must be >= 1"));
        }
        if !(self.early_stop_threshold >= 0.0) {
            return Err(Error::invalid("early_stop_threshold must be non-negative"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("grad_clip must be positive, got {c}")));
            }
        }
        self.scheduler.validate()?;
        self.regularizer.validate()
    }
}

/// Where a run was aborted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainFailure {
    pub epoch: usize,
    pub step: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    /// Mean training loss per completed epoch.
    pub loss_curve: Vec<f64>,
    pub converged: bool,
    pub epochs_run: usize,
    /// Mean loss of the last completed epoch.
    pub final_loss: Option<f64>,
    pub failure: Option<TrainFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_checkpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_checkpoint: Option<String>,
}

/// A finished run with its start and end weights.
#[derive(Clone, Debug)]
pub struct TrainedNetwork {
    pub report: TrainReport,
    pub initial: RnnParams,
    pub params: RnnParams,
}

/// Train one network from `seed`.
///
/// Every step draws a fresh batch. A numeric failure stops the run and is
/// recorded in the report and the parameters reached so far are returned.
pub fn train(spec: &TaskSpec, model: &ModelSpec, cfg: &TrainConfig, seed: u64) -> Result<TrainedNetwork> {
    spec.validate()?;
    model.validate()?;
    cfg.validate()?;
    let mut params = init_params(
        model.width,
        spec.input_dim(),
        spec.output_dim(),
        model.parameterization,
        seed,
    )?;
    let initial = params.clone();
    let lr0 = match model.parameterization {
        Parameterization::Mup { gamma, .. } => mup_lr(gamma, cfg.lr),
        Parameterization::Standard => cfg.lr,
    };
    let mut opt = Adam::new(&params);
    let mut schedule = LrSchedule::new(cfg.scheduler, lr0);
    let mut loss_curve = Vec::new();
    let mut streak = 0;
    let mut converged = false;
    let mut failure = None;

    'epochs: for epoch in 0..cfg.max_epochs {
        let lr = schedule.lr(epoch);
        let mut total = 0.0;
        for step in 0..cfg.steps_per_epoch {
            let batch_seed = derive_seed(seed, Stream::TrainBatch, epoch as u64, step as u64);
            let batch = generate(spec, batch_seed, cfg.batch_size)?;
            match bptt_grads(&params, &batch, &cfg.regularizer) {
                Ok((loss, mut grads)) => {
                    if let Some(c) = cfg.grad_clip {
                        let norm = grads.norm();
                        if norm > c {
                            grads.scale(c / norm);
                        }
                    }
                    opt.step(&mut params, &grads, lr);
                    total += loss.task;
                }
                Err(Error::NumericFailure { location, detail }) => {
                    failure = Some(TrainFailure {
                        epoch,
                        step,
                        message: format!("{location}: {detail}"),
                    });
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let mean = total / cfg.steps_per_epoch as f64;
        log::debug!("seed {seed} epoch {epoch}: loss {mean:.6} lr {lr:.3e}");
        loss_curve.push(mean);
        schedule.observe(mean);
        if mean <= cfg.early_stop_threshold {
            streak += 1;
            if streak >= cfg.early_stop_patience {
                converged = true;
                break;
            }
        } else {
            streak = 0;
        }
    }

    // A parameter update may have produced non-finite weights after the last
    // good forward pass.
    if failure.is_none() && !params.flatten().iter().all(|v| v.is_finite()) {
        failure = Some(TrainFailure {
            epoch: loss_curve.len(),
            step: 0,
            message: "non-finite parameters".into(),
        });
    }
    if failure.is_some() {
        converged = false;
    }
    let report = TrainReport {
        seed,
        final_loss: loss_curve.last().copied(),
        epochs_run: loss_curve.len(),
        loss_curve,
        converged,
        failure,
        initial_checkpoint: None,
        final_checkpoint: None,
    };
    Ok(TrainedNetwork {
        report,
        initial,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_per_task() {
        let dd = TrainConfig::defaults_for(&TaskSpec::delayed_discrimination().kind);
        assert_eq!(dd.max_epochs, 500);
        assert_eq!(dd.early_stop_threshold, 0.01);
        let sine = TrainConfig::defaults_for(&TaskSpec::sine_wave().kind);
        assert_eq!((sine.lr, sine.batch_size), (5e-4, 32));
        let pi = TrainConfig::defaults_for(&TaskSpec::path_integration(2).kind);
        assert_eq!(pi.max_epochs, 1000);
        assert!(matches!(pi.scheduler, Scheduler::ReduceOnPlateau { .. }));
    }

    #[test]
    fn mup_lr_scales_with_gamma() {
        assert_eq!(mup_lr(1.0, 1e-3), 1e-3);
        assert_eq!(mup_lr(10.0, 1e-3), 1e-2);
    }

    #[test]
    fn rejects_zero_steps() {
        let spec = TaskSpec::flip_flop();
        let mut cfg = TrainConfig::defaults_for(&spec.kind);
        cfg.steps_per_epoch = 0;
        assert!(train(&spec, &ModelSpec::standard(4), &cfg, 0).is_err());
    }

    #[test]
    fn divergence_is_recorded() {
        let spec = TaskSpec::flip_flop();
        let mut cfg = TrainConfig::defaults_for(&spec.kind);
        cfg.lr = 1e300;
        cfg.max_epochs = 3;
        cfg.steps_per_epoch = 4;
        cfg.batch_size = 4;
        let run = train(&spec, &ModelSpec::standard(8), &cfg, 1).unwrap();
        assert!(!run.report.converged);
        let failure = run.report.failure.expect("failure recorded");
        assert!(failure.epoch < 3);
        assert!(run.params.flatten().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn grad_clip_bounds_the_update() {
        let spec = TaskSpec::flip_flop();
        let mut cfg = TrainConfig::defaults_for(&spec.kind);
        cfg.max_epochs = 1;
        cfg.steps_per_epoch = 2;
        cfg.batch_size = 4;
        // Far below Adam's epsilon, so each step moves weights by ~lr * 1e-4.
        cfg.grad_clip = Some(1e-12);
        let run = train(&spec, &ModelSpec::standard(8), &cfg, 3).unwrap();
        let moved = run
            .params
            .flatten()
            .iter()
            .zip(run.initial.flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(moved < 1e-6, "{moved}");
        cfg.grad_clip = Some(0.0);
        assert!(cfg.validate().is_err());
    }
}

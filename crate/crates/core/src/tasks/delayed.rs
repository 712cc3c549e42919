use rand::Rng as _;

use super::{check_batch, TaskKind, TaskSpec, TrialBatch};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Silent steps before the first stimulus.
pub const PRE_STIMULUS_STEPS: usize = 5;
/// Duration of each stimulus pulse.
pub const PULSE_STEPS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayedParams {
    pub delay_min: usize,
    pub delay_max: usize,
    pub stim_min: f64,
    pub stim_max: f64,
    /// Adds a second output per channel carrying `f2 - f1`.
    pub aux_magnitude: bool,
}

impl Default for DelayedParams {
    fn default() -> Self {
        Self {
            delay_min: 5,
            delay_max: 20,
            stim_min: 2.0,
            stim_max: 10.0,
            aux_magnitude: false,
        }
    }
}

impl DelayedParams {
    /// First response step for a trial with delay `d`.
    pub fn response_onset(delay: usize) -> usize {
        PRE_STIMULUS_STEPS + 2 * PULSE_STEPS + delay
    }

    pub(super) fn validate(&self, trial_len: usize) -> Result<()> {
        if self.delay_min < 5 || self.delay_min > self.delay_max {
            return Err(Error::invalid(format!(
                "delay range [{}, {}] must satisfy 5 <= min <= max",
                self.delay_min, self.delay_max
            )));
        }
        if !(self.stim_min < self.stim_max) {
            return Err(Error::invalid("stim_min must be below stim_max"));
        }
        if Self::response_onset(self.delay_max) >= trial_len {
            return Err(Error::invalid(format!(
                "trial_len {trial_len} leaves no response period at delay {}",
                self.delay_max
            )));
        }
        Ok(())
    }
}

/// Delayed discrimination: compare two pulses separated by a random delay.
///
/// Per channel the layout is 5 silent steps, `f1` held for 5 steps, a silent
/// delay of `d` steps, `f2` held for 5 steps, then the response period to the
/// end of the trial. The sign target is `sign(f2 - f1)` in the response period
/// and zero before it; the loss mask covers the whole trial so the network is
/// also trained to stay quiet before the decision.
pub fn gen_delayed_discrimination(spec: &TaskSpec, seed: u64, batch: usize) -> Result<TrialBatch> {
    let TaskKind::DelayedDiscrimination(p) = &spec.kind else {
        return Err(Error::invalid(
            "gen_delayed_discrimination requires a DelayedDiscrimination spec",
        ));
    };
    check_batch(spec, batch)?;
    let mut rng = rng_from_seed(seed);
    let mut out = TrialBatch::zeros(spec, batch);
    out.loss_mask.data_mut().fill(1.0);
    let n = spec.channels;

    for b in 0..batch {
        for c in 0..n {
            let (f1, f2) = loop {
                let f1 = rng.random_range(p.stim_min..=p.stim_max);
                let f2 = rng.random_range(p.stim_min..=p.stim_max);
                if f1 != f2 {
                    break (f1, f2);
                }
            };
            let delay = rng.random_range(p.delay_min..=p.delay_max);
            let first = PRE_STIMULUS_STEPS;
            let second = first + PULSE_STEPS + delay;
            let onset = second + PULSE_STEPS;
            for t in first..first + PULSE_STEPS {
                out.inputs.set(b, t, c, f1);
            }
            for t in second..second + PULSE_STEPS {
                out.inputs.set(b, t, c, f2);
            }
            let sign = if f2 > f1 { 1.0 } else { -1.0 };
            for t in onset..spec.trial_len {
                out.targets.set(b, t, c, sign);
                if p.aux_magnitude {
                    out.targets.set(b, t, n + c, f2 - f1);
                }
            }
        }
    }
    Ok(out)
}

use std::f64::consts::PI;

use rand::Rng as _;

use super::{check_batch, TaskKind, TaskSpec, TrialBatch};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineParams {
    pub freq_min: f64,
    pub freq_max: f64,
    /// Number of evenly spaced training frequencies in `[freq_min, freq_max]`.
    pub n_freq: usize,
    pub dt: f64,
}

impl Default for SineParams {
    fn default() -> Self {
        Self {
            freq_min: 1.0,
            freq_max: 30.0,
            n_freq: 100,
            dt: 0.01,
        }
    }
}

impl SineParams {
    pub(super) fn validate(&self) -> Result<()> {
        if self.n_freq < 1 {
            return Err(Error::invalid("n_freq must be at least 1"));
        }
        if !(self.freq_min > 0.0 && self.freq_min <= self.freq_max) {
            return Err(Error::invalid("frequency range must be positive and ordered"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        Ok(())
    }

    pub fn frequency(&self, index: usize) -> f64 {
        if self.n_freq == 1 {
            return self.freq_min;
        }
        self.freq_min + index as f64 * (self.freq_max - self.freq_min) / (self.n_freq - 1) as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_freq).map(|i| self.frequency(i)).collect()
    }

    /// Static input level that encodes frequency `f`.
    pub fn encode(&self, f: f64) -> f64 {
        f / self.freq_max
    }
}

/// Sine generation: a constant input selects the frequency, the target is
/// `sin(2 pi f t dt)` at step `t`.
pub fn gen_sinewave(spec: &TaskSpec, seed: u64, batch: usize) -> Result<TrialBatch> {
    let TaskKind::SineWaveGeneration(p) = &spec.kind else {
        return Err(Error::invalid("gen_sinewave requires a SineWaveGeneration spec"));
    };
    check_batch(spec, batch)?;
    let mut rng = rng_from_seed(seed);
    let mut out = TrialBatch::zeros(spec, batch);
    out.loss_mask.data_mut().fill(1.0);

    for b in 0..batch {
        for c in 0..spec.channels {
            let f = p.frequency(rng.random_range(0..p.n_freq));
            let level = p.encode(f);
            for t in 0..spec.trial_len {
                out.inputs.set(b, t, c, level);
                out.targets.set(b, t, c, (2.0 * PI * f * t as f64 * p.dt).sin());
            }
        }
    }
    Ok(out)
}

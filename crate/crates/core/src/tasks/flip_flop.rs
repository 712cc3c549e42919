use rand::Rng as _;

use super::{check_batch, TaskKind, TaskSpec, TrialBatch};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlipFlopParams {
    /// Per-step probability that a channel emits a ±1 pulse.
    pub p_switch: f64,
}

impl Default for FlipFlopParams {
    fn default() -> Self {
        Self { p_switch: 0.3 }
    }
}

impl FlipFlopParams {
    pub(super) fn validate(&self) -> Result<()> {
        // p_switch = 0 is allowed for silent control batches.
        if !(0.0..1.0).contains(&self.p_switch) {
            return Err(Error::invalid(format!(
                "p_switch must lie in [0, 1), got {}",
                self.p_switch
            )));
        }
        Ok(())
    }
}

/// N-bit flip-flop: each channel holds the most recent nonzero pulse.
///
/// Pulses last one step. Targets are zero until the first pulse on a channel.
pub fn gen_nbff(spec: &TaskSpec, seed: u64, batch: usize) -> Result<TrialBatch> {
    let TaskKind::NBitFlipFlop(params) = &spec.kind else {
        return Err(Error::invalid("gen_nbff requires an NBitFlipFlop spec"));
    };
    check_batch(spec, batch)?;
    let mut rng = rng_from_seed(seed);
    let mut out = TrialBatch::zeros(spec, batch);
    out.loss_mask.data_mut().fill(1.0);

    for b in 0..batch {
        for c in 0..spec.channels {
            let mut state = 0.0;
            for t in 0..spec.trial_len {
                if rng.random::<f64>() < params.p_switch {
                    let pulse = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    out.inputs.set(b, t, c, pulse);
                    state = pulse;
                }
                out.targets.set(b, t, c, state);
            }
        }
    }
    Ok(out)
}

/// Flip-flop target for one channel: the most recent nonzero input, 0 before any.
pub fn hold_last_nonzero(inputs: &[f64]) -> Vec<f64> {
    let mut state = 0.0;
    inputs
        .iter()
        .map(|&x| {
            if x != 0.0 {
                state = x;
            }
            state
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hold_last_nonzero_example() {
        assert_eq!(
            hold_last_nonzero(&[0.0, 1.0, 0.0, -1.0, 0.0]),
            vec![0.0, 1.0, 1.0, -1.0, -1.0]
        );
    }

    fn spec(p: f64) -> TaskSpec {
        TaskSpec::new(TaskKind::NBitFlipFlop(FlipFlopParams { p_switch: p }))
    }

    #[test]
    fn target_holds_last_pulse() {
        let batch = gen_nbff(&spec(0.3).with_channels(2), 11, 4).unwrap();
        for b in 0..4 {
            for c in 0..2 {
                let xs: Vec<f64> = (0..100).map(|t| batch.inputs.get(b, t, c)).collect();
                let ys: Vec<f64> = (0..100).map(|t| batch.targets.get(b, t, c)).collect();
                assert_eq!(hold_last_nonzero(&xs), ys);
            }
        }
    }

    #[test]
    fn silent_when_p_zero() {
        let batch = gen_nbff(&spec(0.0), 3, 5).unwrap();
        assert!(batch.inputs.data().iter().all(|&v| v == 0.0));
        assert!(batch.targets.data().iter().all(|&v| v == 0.0));
        assert!(batch.loss_mask.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn pulse_frequency_matches_p_switch() {
        // 10^4 channels x 100 steps; binomial std of the rate is ~4.6e-4.
        let s = spec(0.3).with_channels(100);
        let batch = gen_nbff(&s, 2024, 100).unwrap();
        let pulses = batch.inputs.data().iter().filter(|&&v| v != 0.0).count();
        let rate = pulses as f64 / batch.inputs.data().len() as f64;
        assert!((rate - 0.3).abs() < 0.01, "rate {rate}");
        let ups = batch.inputs.data().iter().filter(|&&v| v > 0.0).count();
        let frac_up = ups as f64 / pulses as f64;
        assert!((frac_up - 0.5).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(gen_nbff(&spec(0.3), 0, 0).is_err());
        assert!(gen_nbff(&spec(0.3).with_trial_len(0), 0, 1).is_err());
        assert!(gen_nbff(&TaskSpec::sine_wave(), 0, 1).is_err());
    }

    #[test]
    fn deterministic() {
        let s = spec(0.3).with_channels(3);
        assert_eq!(gen_nbff(&s, 5, 8).unwrap(), gen_nbff(&s, 5, 8).unwrap());
        assert_ne!(gen_nbff(&s, 5, 8).unwrap(), gen_nbff(&s, 6, 8).unwrap());
    }
}

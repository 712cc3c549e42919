use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheduler {
    None,
    CosineAnnealingWarmRestarts {
        /// Restart period in epochs.
        period: usize,
        min_lr: f64,
    },
    ReduceOnPlateau {
        factor: f64,
        /// Stagnant epochs tolerated before each reduction.
        patience: usize,
    },
}

impl Scheduler {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheduler::None => Ok(()),
            Scheduler::CosineAnnealingWarmRestarts { period, min_lr } => {
                if period == 0 || !(min_lr >= 0.0) {
                    return Err(Error::invalid("cosine schedule needs period >= 1 and min_lr >= 0"));
                }
                Ok(())
            }
            Scheduler::ReduceOnPlateau { factor, patience } => {
                if !(factor > 0.0 && factor < 1.0) || patience == 0 {
                    return Err(Error::invalid("plateau schedule needs factor in (0,1) and patience >= 1"));
                }
                Ok(())
            }
        }
    }
}

/// Cosine annealing with warm restarts every `period` epochs.
pub fn cosine_lr(lr0: f64, min_lr: f64, period: usize, epoch: usize) -> f64 {
    let phase = (epoch % period) as f64 / period as f64;
    min_lr + (lr0 - min_lr) * (1.0 + (PI * phase).cos()) / 2.0
}

/// Per-run learning-rate state.
#[derive(Clone, Debug)]
pub struct LrSchedule {
    scheduler: Scheduler,
    lr0: f64,
    current: f64,
    best: f64,
    stagnant: usize,
}

impl LrSchedule {
    pub fn new(scheduler: Scheduler, lr0: f64) -> Self {
        Self {
            scheduler,
            lr0,
            current: lr0,
            best: f64::INFINITY,
            stagnant: 0,
        }
    }

    /// Learning rate to use during `epoch`.
    pub fn lr(&self, epoch: usize) -> f64 {
        match self.scheduler {
            Scheduler::CosineAnnealingWarmRestarts { period, min_lr } => {
                cosine_lr(self.lr0, min_lr, period, epoch)
            }
            Scheduler::None | Scheduler::ReduceOnPlateau { .. } => self.current,
        }
    }

    /// Feed the epoch's mean loss; only the plateau schedule reacts.
    pub fn observe(&mut self, loss: f64) {
        let Scheduler::ReduceOnPlateau { factor, patience } = self.scheduler else {
            return;
        };
        if loss < self.best {
            self.best = loss;
            self.stagnant = 0;
        } else {
            self.stagnant += 1;
            if self.stagnant >= patience {
                self.current *= factor;
                self.stagnant = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(1e-3, 0.0, 50, 0), 1e-3);
        assert!((cosine_lr(1e-3, 1e-5, 50, 25) - (1e-3 + 1e-5) / 2.0).abs() < 1e-15);
        assert_eq!(cosine_lr(1e-3, 0.0, 50, 50), 1e-3);
    }

    #[test]
    fn plateau_ignores_improving_losses() {
        let mut s = LrSchedule::new(Scheduler::ReduceOnPlateau { factor: 0.5, patience: 3 }, 1.0);
        for e in 0..100 {
            s.observe(1.0 / (e + 1) as f64);
        }
        assert_eq!(s.lr(100), 1.0);
    }

    #[test]
    fn plateau_halves_every_patience_epochs() {
        let mut s = LrSchedule::new(Scheduler::ReduceOnPlateau { factor: 0.5, patience: 40 }, 1e-3);
        s.observe(0.3);
        for _ in 0..80 {
            s.observe(0.3);
        }
        assert_eq!(s.lr(81), 1e-3 / 4.0);
    }

    #[test]
    fn constant_schedule() {
        let s = LrSchedule::new(Scheduler::None, 5e-4);
        assert_eq!(s.lr(0), 5e-4);
        assert_eq!(s.lr(499), 5e-4);
    }
}

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{check_batch, TaskKind, TaskSpec, TrialBatch};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathParams {
    pub dims: usize,
    pub v_max: f64,
    /// Std of the per-step heading (and elevation) increments.
    pub direction_std: f64,
    pub speed_std: f64,
    /// Additive Gaussian noise on the observed inputs.
    pub noise_std: f64,
    pub mean_stop: f64,
    pub mean_go: f64,
    /// Side length of the cubic arena `[0, arena_size]^dims`.
    pub arena_size: f64,
    /// Also feed the start position on extra inputs at step 0.
    pub start_cue: bool,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            dims: 2,
            v_max: 0.4,
            direction_std: PI / 10.0,
            speed_std: 0.1,
            noise_std: 1e-4,
            mean_stop: 30.0,
            mean_go: 50.0,
            arena_size: 10.0,
            start_cue: false,
        }
    }
}

impl PathParams {
    pub(super) fn validate(&self) -> Result<()> {
        if self.dims != 2 && self.dims != 3 {
            return Err(Error::invalid(format!("dims must be 2 or 3, got {}", self.dims)));
        }
        let positive = [
            ("v_max", self.v_max),
            ("arena_size", self.arena_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("direction_std", self.direction_std),
            ("speed_std", self.speed_std),
            ("noise_std", self.noise_std),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be non-negative")));
            }
        }
        if !(self.mean_stop >= 1.0 && self.mean_go >= 1.0) {
            return Err(Error::invalid("mean stop/go durations must be at least 1"));
        }
        Ok(())
    }

    fn inputs_per_channel(&self) -> usize {
        if self.start_cue {
            2 * self.dims
        } else {
            self.dims
        }
    }
}

/// Unit heading for azimuth `theta` (and elevation `phi` in 3D).
fn heading(dims: usize, theta: f64, phi: f64) -> [f64; 3] {
    if dims == 2 {
        [theta.cos(), theta.sin(), 0.0]
    } else {
        [phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin()]
    }
}

/// One Euler step of the agent, clipped to the arena walls.
///
/// `angles` is `[theta]` in 2D or `[theta, phi]` in 3D.
pub fn integrate_step(pos: &mut [f64], angles: &[f64], speed: f64, arena_size: f64) {
    let dims = pos.len();
    let phi = if dims == 3 { angles[1] } else { 0.0 };
    let dir = heading(dims, angles[0], phi);
    for (p, d) in pos.iter_mut().zip(dir) {
        *p = (*p + speed * d).clamp(0.0, arena_size);
    }
}

/// Geometric duration on {1, 2, ...} with the given mean.
fn geometric(rng: &mut Rng, mean: f64) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let p = 1.0 / mean;
    let u: f64 = rng.random();
    let d = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
    (d.max(1.0)) as usize
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn reflect_elevation(a: f64) -> f64 {
    // Fold onto [-pi/2, pi/2].
    let mut x = (a + FRAC_PI_2).rem_euclid(2.0 * PI);
    if x > PI {
        x = 2.0 * PI - x;
    }
    x - FRAC_PI_2
}

/// Path integration in a bounded arena.
///
/// Heading follows a Gaussian random walk, speed a clipped random walk, and
/// the agent alternates stop/go epochs with geometric durations. Inputs are
/// `(theta, v)` in 2D or `(theta, phi, v)` in 3D plus observation noise;
/// targets are the noiseless, wall-clipped positions after each step.
pub fn gen_path_integration(spec: &TaskSpec, seed: u64, batch: usize) -> Result<TrialBatch> {
    let TaskKind::PathIntegration(p) = &spec.kind else {
        return Err(Error::invalid("gen_path_integration requires a PathIntegration spec"));
    };
    check_batch(spec, batch)?;
    let mut rng = rng_from_seed(seed);
    let mut out = TrialBatch::zeros(spec, batch);
    out.loss_mask.data_mut().fill(1.0);

    let dims = p.dims;
    let dir_step = Normal::new(0.0, p.direction_std).map_err(|e| Error::invalid(e.to_string()))?;
    let speed_step = Normal::new(0.0, p.speed_std).map_err(|e| Error::invalid(e.to_string()))?;
    let noise = Normal::new(0.0, p.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let in_stride = p.inputs_per_channel();
    let p_go = p.mean_go / (p.mean_go + p.mean_stop);

    for b in 0..batch {
        for c in 0..spec.channels {
            let mut pos = [0.0; 3];
            for x in pos.iter_mut().take(dims) {
                *x = rng.random_range(0.0..p.arena_size);
            }
            let mut angles = [rng.random_range(-PI..PI), 0.0];
            if dims == 3 {
                angles[1] = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            }
            let mut speed = rng.random_range(0.0..p.v_max);
            let mut moving = rng.random::<f64>() < p_go;
            let mut remaining = geometric(&mut rng, if moving { p.mean_go } else { p.mean_stop });

            let in_base = c * in_stride;
            if p.start_cue {
                for d in 0..dims {
                    out.inputs.set(b, 0, in_base + dims + d, pos[d]);
                }
            }
            for t in 0..spec.trial_len {
                if remaining == 0 {
                    moving = !moving;
                    remaining = geometric(&mut rng, if moving { p.mean_go } else { p.mean_stop });
                }
                remaining -= 1;
                angles[0] = wrap_angle(angles[0] + dir_step.sample(&mut rng));
                if dims == 3 {
                    angles[1] = reflect_elevation(angles[1] + dir_step.sample(&mut rng));
                }
                speed = (speed + speed_step.sample(&mut rng)).clamp(0.0, p.v_max);
                let v = if moving { speed } else { 0.0 };

                integrate_step(&mut pos[..dims], &angles[..dims - 1], v, p.arena_size);

                let frame = out.inputs.frame_mut(b, t);
                for (k, a) in angles[..dims - 1].iter().enumerate() {
                    frame[in_base + k] = a + noise.sample(&mut rng);
                }
                frame[in_base + dims - 1] = v + noise.sample(&mut rng);
                for d in 0..dims {
                    out.targets.set(b, t, c * dims + d, pos[d]);
                }
            }
        }
    }
    Ok(out)
}

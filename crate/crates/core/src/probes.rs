//! Memory demand of a task: how much history a feedforward probe needs to
//! predict the next target.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::par_map;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::tasks::{generate, TaskKind, TaskSpec};
use crate::training::adam_update;

/// What the history window contains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryLayout {
    /// `[x_{t-h+1}, y_{t-h+1}, .., x_t, y_t]`, dimension `h (d_in + d_out)`.
    #[default]
    InputsAndTargets,
    /// `[x_{t-h+1}, .., x_t, y_t]`, dimension `h d_in + d_out`.
    InputsOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Candidate history lengths, strictly increasing.
    pub h_range: Vec<usize>,
    pub hidden_units: usize,
    pub epochs: usize,
    /// Random initializations averaged per history length.
    pub n_inits: usize,
    pub test_fraction: f64,
    pub n_trials: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Relative slack when locating the plateau.
    pub plateau_tol: f64,
    /// Absolute slack for the plateau test, as a fraction of the curve's
    /// range `max - min`.
    pub noise_floor: f64,
    pub layout: HistoryLayout,
    /// Zero-fill windows that reach before the trial start, so every `h`
    /// is scored on the same target steps.
    pub pad_history: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            h_range: (1..=8).collect(),
            hidden_units: 64,
            epochs: 100,
            n_inits: 2,
            test_fraction: 0.2,
            n_trials: 512,
            lr: 3e-3,
            batch_size: 128,
            plateau_tol: 0.05,
            noise_floor: 0.1,
            layout: HistoryLayout::InputsAndTargets,
            pad_history: true,
        }
    }
}

impl ProbeConfig {
    /// Defaults with a history range wide enough for the task.
    pub fn for_task(spec: &TaskSpec) -> Self {
        let mut cfg = Self::default();
        if let TaskKind::DelayedDiscrimination(_) = spec.kind {
            cfg.h_range = (1..=spec.trial_len.saturating_sub(20).max(1)).collect();
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_range.is_empty() || self.h_range[0] == 0 {
            return Err(Error::invalid("h_range must be non-empty and start at 1 or more"));
        }
        if self.h_range.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("h_range must be strictly increasing"));
        }
        if self.hidden_units == 0 || self.epochs == 0 || self.n_inits == 0 || self.batch_size == 0 || self.n_trials == 0 {
            return Err(Error::invalid("probe sizes and counts must be at least 1"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        if !(self.lr > 0.0) || !(self.plateau_tol >= 0.0) || !(self.noise_floor >= 0.0) {
            return Err(Error::invalid("lr must be positive, plateau_tol and noise_floor non-negative"));
        }
        Ok(())
    }
}

/// Windows of the last `h` steps, labelled with the next target.
///
/// Each trial of length `T` yields `T - h` rows, or `T - 1` with `pad`, where
/// windows reaching before the trial start are zero-filled.
pub fn build_history_dataset(
    spec: &TaskSpec,
    h: usize,
    seed: u64,
    n_trials: usize,
    layout: HistoryLayout,
    pad: bool,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let t_len = spec.trial_len;
    if h == 0 || h >= t_len {
        return Err(Error::invalid(format!("history {h} must lie in [1, {t_len})")));
    }
    let data = generate(spec, seed, n_trials)?;
    let (d_in, d_out) = (spec.input_dim(), spec.output_dim());
    let dim = match layout {
        HistoryLayout::InputsAndTargets => h * (d_in + d_out),
        HistoryLayout::InputsOnly => h * d_in + d_out,
    };
    let first = if pad { 0 } else { h - 1 };
    let per_trial = t_len - 1 - first;
    let rows = n_trials * per_trial;
    let mut x = DMatrix::zeros(rows, dim);
    let mut y = DMatrix::zeros(rows, d_out);
    let step_dim = match layout {
        HistoryLayout::InputsAndTargets => d_in + d_out,
        HistoryLayout::InputsOnly => d_in,
    };
    for b in 0..n_trials {
        for s in 0..per_trial {
            let t = s + first;
            let r = b * per_trial + s;
            // Steps before the trial start stay zero.
            let mut col = (h - 1).saturating_sub(t) * step_dim;
            for u in (t + 1).saturating_sub(h)..=t {
                for &v in data.inputs.frame(b, u) {
                    x[(r, col)] = v;
                    col += 1;
                }
                if layout == HistoryLayout::InputsAndTargets {
                    for &v in data.targets.frame(b, u) {
                        x[(r, col)] = v;
                        col += 1;
                    }
                }
            }
            if layout == HistoryLayout::InputsOnly {
                for &v in data.targets.frame(b, t) {
                    x[(r, col)] = v;
                    col += 1;
                }
            }
            for (c, &v) in data.targets.frame(b, t + 1).iter().enumerate() {
                y[(r, c)] = v;
            }
        }
    }
    Ok((x, y))
}

struct Mlp {
    w1: DMatrix<f64>,
    b1: DVector<f64>,
    w2: DMatrix<f64>,
    b2: DVector<f64>,
}

impl Mlp {
    fn new(d_in: usize, hidden: usize, d_out: usize, rng: &mut crate::rng::Rng) -> Self {
        let s1 = 1.0 / (d_in as f64).sqrt();
        let s2 = 1.0 / (hidden as f64).sqrt();
        Self {
            w1: DMatrix::from_fn(hidden, d_in, |_, _| rng.random_range(-s1..s1)),
            b1: DVector::from_fn(hidden, |_, _| rng.random_range(-s1..s1)),
            w2: DMatrix::from_fn(d_out, hidden, |_, _| rng.random_range(-s2..s2)),
            b2: DVector::from_fn(d_out, |_, _| rng.random_range(-s2..s2)),
        }
    }

    fn hidden(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w1.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b1.transpose();
        }
        z.apply(|v| *v = v.tanh());
        z
    }

    fn output(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = a * self.w2.transpose();
        for mut row in y.row_iter_mut() {
            row += self.b2.transpose();
        }
        y
    }

    fn mse(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
        (self.output(&self.hidden(x)) - y).norm_squared() / y.len() as f64
    }

    /// Gradients of the mean squared error, as flat blocks.
    fn grads(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> [Vec<f64>; 4] {
        let a = self.hidden(x);
        let dy = (self.output(&a) - y) * (2.0 / y.len() as f64);
        let gw2 = dy.transpose() * &a;
        let gb2: Vec<f64> = (0..dy.ncols()).map(|c| dy.column(c).sum()).collect();
        let mut dz = &dy * &self.w2;
        dz.zip_apply(&a, |d, v| *d *= 1.0 - v * v);
        let gw1 = dz.transpose() * x;
        let gb1: Vec<f64> = (0..dz.ncols()).map(|c| dz.column(c).sum()).collect();
        [gw1.as_slice().to_vec(), gb1, gw2.as_slice().to_vec(), gb2]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
        ]
    }
}

fn standardize(train: &mut DMatrix<f64>, test: &mut DMatrix<f64>) {
    let rows = train.nrows() as f64;
    for c in 0..train.ncols() {
        let mean = train.column(c).sum() / rows;
        let var = train.column(c).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
        for m in [&mut *train, &mut *test] {
            m.column_mut(c).apply(|v| *v = (*v - mean) * scale);
        }
    }
}

fn rows_of(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

/// Held-out MSE of a two-layer tanh MLP, averaged over `n_inits` seeds.
pub fn fit_mlp_probe(features: &DMatrix<f64>, labels: &DMatrix<f64>, cfg: &ProbeConfig, seed: u64) -> Result<f64> {
    cfg.validate()?;
    let rows = features.nrows();
    if labels.nrows() != rows {
        return Err(Error::invalid("features and labels differ in row count"));
    }
    if rows < 100 {
        return Err(Error::invalid(format!("probe needs at least 100 rows, got {rows}")));
    }
    let n_test = ((rows as f64) * cfg.test_fraction).round() as usize;
    let n_train = rows - n_test;
    if n_test == 0 || n_train == 0 {
        return Err(Error::invalid("train/test split leaves an empty side"));
    }
    let mut x_train = features.rows(0, n_train).into_owned();
    let mut x_test = features.rows(n_train, n_test).into_owned();
    standardize(&mut x_train, &mut x_test);
    let y_train = labels.rows(0, n_train).into_owned();
    let y_test = labels.rows(n_train, n_test).into_owned();

    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut total = 0.0;
    for init in 0..cfg.n_inits {
        let mut rng = stream_rng(seed, Stream::Probe, init as u64, 0);
        let mut net = Mlp::new(features.ncols(), cfg.hidden_units, labels.ncols(), &mut rng);
        let mut m: Vec<Vec<f64>> = net.blocks_mut().iter().map(|b| vec![0.0; b.len()]).collect();
        let mut v = m.clone();
        let mut order: Vec<usize> = (0..n_train).collect();
        let total_steps = cfg.epochs * n_train.div_ceil(cfg.batch_size);
        let mut step = 0i32;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                step += 1;
                let xb = rows_of(&x_train, chunk);
                let yb = rows_of(&y_train, chunk);
                let grads = net.grads(&xb, &yb);
                let corr = [1.0 - f64::powi(b1, step), 1.0 - f64::powi(b2, step)];
                // Cosine decay to zero over the whole run.
                let frac = (step - 1) as f64 / total_steps as f64;
                let lr = 0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * frac).cos());
                for (((p, g), mb), vb) in net.blocks_mut().into_iter().zip(&grads).zip(&mut m).zip(&mut v) {
                    adam_update(p, g, mb, vb, [b1, b2, eps], corr, lr);
                }
            }
        }
        let mse = net.mse(&x_test, &y_test);

        if !mse.is_finite() {
            return Err(Error::numeric("fit_mlp_probe", "non-finite test loss"));
        }
        total += mse;
    }
    Ok(total / cfg.n_inits as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryDemand {
    pub h_star: usize,
    /// `(h, held-out MSE)` for each candidate.
    pub curve: Vec<(usize, f64)>,
}

/// Smallest `h` whose error is within `(1 + tol)` of every longer history's,
/// up to an absolute slack of `floor` times the range of the curve.
pub fn plateau_onset(curve: &[(usize, f64)], tol: f64, floor: f64) -> usize {
    let max = curve.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let slack = floor * (max - min);
    let mut suffix_min = f64::INFINITY;
    let mut mins = vec![0.0; curve.len()];
    for (i, &(_, mse)) in curve.iter().enumerate().rev() {
        suffix_min = suffix_min.min(mse);
        mins[i] = suffix_min;
    }
    curve
        .iter()
        .zip(&mins)
        .find(|((_, mse), min)| *mse <= (1.0 + tol) * **min + slack)
        .map(|((h, _), _)| *h)
        .expect("the last entry always qualifies")
}

/// Probe error for every candidate history and the plateau onset `h*`.
pub fn estimate_memory_demand(spec: &TaskSpec, cfg: &ProbeConfig, seed: u64, jobs: usize) -> Result<MemoryDemand> {
    cfg.validate()?;
    spec.validate()?;
    let data_seed = derive_seed(seed, Stream::Probe, 0, 1);
    let curve = par_map(cfg.h_range.len(), jobs, |i| {
        let h = cfg.h_range[i];
        let (x, y) = build_history_dataset(spec, h, data_seed, cfg.n_trials, cfg.layout, cfg.pad_history)?;
        let mse = fit_mlp_probe(&x, &y, cfg, derive_seed(seed, Stream::Probe, h as u64, 2))?;
        log::debug!("probe h={h}: mse {mse:.3e}");
        Ok((h, mse))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(MemoryDemand {
        h_star: plateau_onset(&curve, cfg.plateau_tol, cfg.noise_floor),
        curve,
    })
}

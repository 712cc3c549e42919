//! Discrete-time vanilla RNNs in standard and muP (leaky-integrator) form.
//!
//! Standard:
//! ```text
//! h_t = tanh(W_h h_{t-1} + W_x x_t + b)        y_t = W_out h_t + b_out
//! ```
//! muP, with width `N`, feature-learning strength `gamma` and time constant `tau`:
//! ```text
//! h_{t+1} = h_t + tau * (-h_t + J phi(h_t) / N + U x_t + b)
//! y_{t+1} = W_out phi(h_{t+1}) / (gamma N) + b_out
//! ```
//! `J` and `U` are stored in `w_h` and `w_x`. The hidden state starts at zero.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Parameterization {
    Standard,
    Mup {
        /// Feature-learning strength; larger is richer.
        gamma: f64,
        /// Leak rate in (0, 1].
        tau: f64,
    },
}

impl Parameterization {
    pub fn validate(&self) -> Result<()> {
        if let Parameterization::Mup { gamma, tau } = *self {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
            }
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
            }
        }
        Ok(())
    }

    pub fn is_mup(&self) -> bool {
        matches!(self, Parameterization::Mup { .. })
    }
}

/// Pointwise nonlinearity. Only `Tanh` is reachable from configs; `Identity`
/// exists so the linear-system oracles in the tests can run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Nonlinearity {
    #[default]
    Tanh,
    Identity,
}

impl Nonlinearity {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Identity => x,
        }
    }

    /// Derivative expressed through the activated value `y = phi(x)`.
    #[inline]
    fn slope_from_output(self, y: f64) -> f64 {
        match self {
            Nonlinearity::Tanh => 1.0 - y * y,
            Nonlinearity::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams {
    /// Recurrent weights (`n x n`), `J` in muP.
    pub w_h: DMatrix<f64>,
    /// Input weights (`n x m`), `U` in muP.
    pub w_x: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Readout (`p x n`).
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
    pub parameterization: Parameterization,
    nonlinearity: Nonlinearity,
}

/// Gradient (or optimizer moment) with the same block layout as [`RnnParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w_h: DMatrix<f64>,
    pub w_x: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w_out: DMatrix<f64>,
    pub b_out: DVector<f64>,
}

/// Names of the parameter blocks, in storage order.
pub const BLOCK_NAMES: [&str; 5] = ["w_h", "w_x", "b", "w_out", "b_out"];

impl Gradients {
    pub fn zeros_like(p: &RnnParams) -> Self {
        Self {
            w_h: DMatrix::zeros(p.w_h.nrows(), p.w_h.ncols()),
            w_x: DMatrix::zeros(p.w_x.nrows(), p.w_x.ncols()),
            b: DVector::zeros(p.b.len()),
            w_out: DMatrix::zeros(p.w_out.nrows(), p.w_out.ncols()),
            b_out: DVector::zeros(p.b_out.len()),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 5] {
        [
            self.w_h.as_slice(),
            self.w_x.as_slice(),
            self.b.as_slice(),
            self.w_out.as_slice(),
            self.b_out.as_slice(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_h.as_mut_slice(),
            self.w_x.as_mut_slice(),
            self.b.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Hidden states of a batch, `(trials, time, units)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenTrajectory(pub Tensor3);

impl HiddenTrajectory {
    pub fn values(&self) -> &Tensor3 {
        &self.0
    }

    pub fn units(&self) -> usize {
        self.0.channels()
    }
}

/// Everything the backward pass needs from one forward pass.
pub(crate) struct Unrolled {
    /// `m x B` per step.
    pub inputs: Vec<DMatrix<f64>>,
    /// `n x B`; `states[0]` is the zero initial state, `states[t + 1]` follows input `t`.
    pub states: Vec<DMatrix<f64>>,
    /// `phi(states[t])` in muP mode; empty in standard mode.
    pub acts: Vec<DMatrix<f64>>,
    /// `p x B` per step.
    pub outputs: Vec<DMatrix<f64>>,
}

impl Unrolled {
    pub fn batch(&self) -> usize {
        self.states[0].ncols()
    }

    pub fn steps(&self) -> usize {
        self.outputs.len()
    }

    pub fn outputs_tensor(&self) -> Tensor3 {
        stack_steps(&self.outputs)
    }

    pub fn trajectory(&self) -> HiddenTrajectory {
        HiddenTrajectory(stack_steps(&self.states[1..]))
    }
}

/// Stack per-step `c x B` matrices into a `(B, T, c)` tensor.
fn stack_steps(steps: &[DMatrix<f64>]) -> Tensor3 {
    let t_len = steps.len();
    let (c, batch) = steps.first().map_or((0, 0), |m| (m.nrows(), m.ncols()));
    let mut out = Tensor3::zeros(batch, t_len, c);
    for (t, m) in steps.iter().enumerate() {
        for b in 0..batch {
            out.frame_mut(b, t).copy_from_slice(m.column(b).as_slice());
        }
    }
    out
}

/// Split a `(B, T, c)` tensor into per-step `c x B` matrices.
pub(crate) fn split_steps(x: &Tensor3) -> Vec<DMatrix<f64>> {
    let [batch, t_len, c] = x.dims();
    (0..t_len)
        .map(|t| {
            let mut m = DMatrix::zeros(c, batch);
            for b in 0..batch {
                m.column_mut(b).copy_from_slice(x.frame(b, t));
            }
            m
        })
        .collect()
}

fn uniform_matrix(rng: &mut crate::rng::Rng, rows: usize, cols: usize, bound: f64) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Seeded initialisation.
///
/// Standard mode draws every weight and bias from `U(-1/sqrt(n), 1/sqrt(n))`.
/// muP draws `J` from `N(0, n)` (variance `n`, used with the `1/n`
/// prefactor), `U` and the readout from the same uniform law, and zeroes the
/// biases.
pub fn init_params(
    n: usize,
    m: usize,
    p: usize,
    parameterization: Parameterization,
    seed: u64,
) -> Result<RnnParams> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::invalid(format!(
            "network dimensions must be positive, got n={n} m={m} p={p}"
        )));
    }
    parameterization.validate()?;
    let mut rng = stream_rng(seed, Stream::Init, 0, 0);
    let bound = 1.0 / (n as f64).sqrt();
    let params = match parameterization {
        Parameterization::Standard => {
            let w_h = uniform_matrix(&mut rng, n, n, bound);
            let w_x = uniform_matrix(&mut rng, n, m, bound);
            let b = DVector::from_iterator(n, (0..n).map(|_| rng.random_range(-bound..bound)));
            let w_out = uniform_matrix(&mut rng, p, n, bound);
            let b_out = DVector::from_iterator(p, (0..p).map(|_| rng.random_range(-bound..bound)));
            RnnParams::from_blocks(w_h, w_x, b, w_out, b_out, parameterization)?
        }
        Parameterization::Mup { .. } => {
            let normal = Normal::new(0.0, (n as f64).sqrt()).expect("finite std");
            let data: Vec<f64> = (0..n * n).map(|_| normal.sample(&mut rng)).collect();
            let w_h = DMatrix::from_row_slice(n, n, &data);
            let w_x = uniform_matrix(&mut rng, n, m, bound);
            let w_out = uniform_matrix(&mut rng, p, n, bound);
            RnnParams::from_blocks(w_h, w_x, DVector::zeros(n), w_out, DVector::zeros(p), parameterization)?
        }
    };
    Ok(params)
}

impl RnnParams {
    pub fn from_blocks(
        w_h: DMatrix<f64>,
        w_x: DMatrix<f64>,
        b: DVector<f64>,
        w_out: DMatrix<f64>,
        b_out: DVector<f64>,
        parameterization: Parameterization,
    ) -> Result<Self> {
        let n = w_h.nrows();
        let ok = w_h.ncols() == n
            && w_x.nrows() == n
            && b.len() == n
            && w_out.ncols() == n
            && b_out.len() == w_out.nrows();
        if !ok {
            return Err(Error::invalid(format!(
                "inconsistent parameter shapes: w_h {:?}, w_x {:?}, b {}, w_out {:?}, b_out {}",
                w_h.shape(),
                w_x.shape(),
                b.len(),
                w_out.shape(),
                b_out.len()
            )));
        }
        parameterization.validate()?;
        let params = Self {
            w_h,
            w_x,
            b,
            w_out,
            b_out,
            parameterization,
            nonlinearity: Nonlinearity::Tanh,
        };
        if !params.blocks().iter().all(|b| b.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("parameters contain non-finite entries"));
        }
        Ok(params)
    }

    /// Swap the pointwise nonlinearity. Test hook for linear-system oracles.
    #[doc(hidden)]
    pub fn with_nonlinearity(mut self, nonlinearity: Nonlinearity) -> Self {
        self.nonlinearity = nonlinearity;
        self
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn hidden(&self) -> usize {
        self.w_h.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w_out.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    /// Readout prefactor: 1 in standard mode, `1 / (gamma n)` in muP.
    pub fn readout_scale(&self) -> f64 {
        match self.parameterization {
            Parameterization::Standard => 1.0,
            Parameterization::Mup { gamma, .. } => 1.0 / (gamma * self.hidden() as f64),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 5] {
        [
            self.w_h.as_slice(),
            self.w_x.as_slice(),
            self.b.as_slice(),
            self.w_out.as_slice(),
            self.b_out.as_slice(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.w_h.as_mut_slice(),
            self.w_x.as_mut_slice(),
            self.b.as_mut_slice(),
            self.w_out.as_mut_slice(),
            self.b_out.as_mut_slice(),
        ]
    }

    /// All parameters in block order (column-major within each matrix).
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            let len = block.len();
            block.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Run the network over `(batch, time, m)` inputs from the zero state.
    pub fn forward(&self, inputs: &Tensor3) -> Result<(Tensor3, HiddenTrajectory)> {
        let cache = self.unroll(inputs)?;
        Ok((cache.outputs_tensor(), cache.trajectory()))
    }

    pub(crate) fn unroll(&self, inputs: &Tensor3) -> Result<Unrolled> {
        let [batch, t_len, m] = inputs.dims();
        if m != self.input_dim() {
            return Err(Error::invalid(format!(
                "inputs have {m} channels, network expects {}",
                self.input_dim()
            )));
        }
        if batch == 0 || t_len == 0 {
            return Err(Error::invalid("inputs must have non-empty batch and time axes"));
        }
        let n = self.hidden();
        let phi = self.nonlinearity;
        let xs = split_steps(inputs);
        let bias_block = DMatrix::from_fn(n, batch, |i, _| self.b[i]);
        let out_bias = DMatrix::from_fn(self.output_dim(), batch, |i, _| self.b_out[i]);
        let scale = self.readout_scale();

        let mut states = Vec::with_capacity(t_len + 1);
        let mut acts = Vec::new();
        let mut outputs = Vec::with_capacity(t_len);
        states.push(DMatrix::zeros(n, batch));

        match self.parameterization {
            Parameterization::Standard => {
                for (t, x) in xs.iter().enumerate() {
                    let mut pre = bias_block.clone();
                    pre.gemm(1.0, &self.w_h, &states[t], 1.0);
                    pre.gemm(1.0, &self.w_x, x, 1.0);
                    pre.apply(|v| *v = phi.apply(*v));
                    check_finite(&pre, t)?;
                    let mut y = out_bias.clone();
                    y.gemm(1.0, &self.w_out, &pre, 1.0);
                    outputs.push(y);
                    states.push(pre);
                }
            }
            Parameterization::Mup { tau, .. } => {
                let inv_n = 1.0 / n as f64;
                acts.push(DMatrix::zeros(n, batch));
                for (t, x) in xs.iter().enumerate() {
                    let mut drive = bias_block.clone();
                    drive.gemm(inv_n, &self.w_h, &acts[t], 1.0);
                    drive.gemm(1.0, &self.w_x, x, 1.0);
                    // h + tau * (-h + drive)
                    let mut next = states[t].scale(1.0 - tau);
                    next.zip_apply(&drive, |a, d| *a += tau * d);
                    check_finite(&next, t)?;
                    let act = next.map(|v| phi.apply(v));
                    let mut y = out_bias.clone();
                    y.gemm(scale, &self.w_out, &act, 1.0);
                    outputs.push(y);
                    states.push(next);
                    acts.push(act);
                }
            }
        }
        Ok(Unrolled {
            inputs: xs,
            states,
            acts,
            outputs,
        })
    }

    /// Reverse-mode gradients given `dL/dy_t` (`p x B` per step).
    pub(crate) fn backprop(&self, cache: &Unrolled, d_outputs: &[DMatrix<f64>]) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        let n = self.hidden();
        let batch = cache.batch();
        let phi = self.nonlinearity;
        let w_out_t = self.w_out.transpose();
        let w_h_t = self.w_h.transpose();
        let mut carry = DMatrix::<f64>::zeros(n, batch);
        let mut d_h = DMatrix::<f64>::zeros(n, batch);

        match self.parameterization {
            Parameterization::Standard => {
                for t in (0..cache.steps()).rev() {
                    let h = &cache.states[t + 1];
                    let dy = &d_outputs[t];
                    g.w_out.gemm(1.0, dy, &h.transpose(), 1.0);
                    add_row_sums(&mut g.b_out, dy, 1.0);
                    d_h.copy_from(&carry);
                    d_h.gemm(1.0, &w_out_t, dy, 1.0);
                    d_h.zip_apply(h, |d, y| *d *= phi.slope_from_output(y));
                    g.w_h.gemm(1.0, &d_h, &cache.states[t].transpose(), 1.0);
                    g.w_x.gemm(1.0, &d_h, &cache.inputs[t].transpose(), 1.0);
                    add_row_sums(&mut g.b, &d_h, 1.0);
                    carry.gemm(1.0, &w_h_t, &d_h, 0.0);
                }
            }
            Parameterization::Mup { tau, .. } => {
                let scale = self.readout_scale();
                let inv_n = 1.0 / n as f64;
                let mut tmp = DMatrix::<f64>::zeros(n, batch);
                for t in (0..cache.steps()).rev() {
                    let act = &cache.acts[t + 1];
                    let dy = &d_outputs[t];
                    g.w_out.gemm(scale, dy, &act.transpose(), 1.0);
                    add_row_sums(&mut g.b_out, dy, 1.0);
                    // dL/dh_{t+1}
                    tmp.gemm(scale, &w_out_t, dy, 0.0);
                    tmp.zip_apply(act, |d, y| *d *= phi.slope_from_output(y));
                    d_h.copy_from(&carry);
                    d_h += &tmp;
                    let prev_act = &cache.acts[t];
                    g.w_h.gemm(tau * inv_n, &d_h, &prev_act.transpose(), 1.0);
                    g.w_x.gemm(tau, &d_h, &cache.inputs[t].transpose(), 1.0);
                    add_row_sums(&mut g.b, &d_h, tau);
                    // dL/dh_t through the recurrence
                    tmp.gemm(tau * inv_n, &w_h_t, &d_h, 0.0);
                    tmp.zip_apply(prev_act, |d, y| *d *= phi.slope_from_output(y));
                    carry.copy_from(&tmp);
                    carry.zip_apply(&d_h, |a, d| *a += (1.0 - tau) * d);
                }
            }
        }
        g
    }
}

fn add_row_sums(acc: &mut DVector<f64>, m: &DMatrix<f64>, scale: f64) {
    for j in 0..m.ncols() {
        acc.axpy(scale, &m.column(j), 1.0);
    }
}

fn check_finite(m: &DMatrix<f64>, step: usize) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::numeric(format!("forward step {step}"), "non-finite hidden state"))
    }
}

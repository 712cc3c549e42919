//! Browser demo: look at task trials, scan the 2x2 conjugacy landscape, and
//! embed a small trained ensemble.
//!
//! Each operation has a plain Rust form returning a serializable view and a
//! `*_json` wrapper exported to JavaScript.

use degenkit::dynamics::{mds_embed, orthogonal_conjugacy, ConjugacySolver};
use degenkit::tasks::generate;
use degenkit::training::{train, ModelSpec, TrainConfig};
use degenkit::weights::{pairwise_pif, PIF_RESTARTS};
use degenkit::{Error, Result, TaskSpec};
use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct TrialView {
    pub task: String,
    pub time: usize,
    /// One series per input dimension.
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

fn task_by_name(name: &str, channels: usize) -> Result<TaskSpec> {
    let spec = match name {
        "flip_flop" => TaskSpec::flip_flop(),
        "delayed_discrimination" => TaskSpec::delayed_discrimination(),
        "sine" => TaskSpec::sine_wave(),
        "path_2d" => TaskSpec::path_integration(2),
        "path_3d" => TaskSpec::path_integration(3),
        other => return Err(Error::InvalidArgument(format!("unknown task `{other}`"))),
    };
    let spec = spec.with_channels(channels);
    spec.validate()?;
    Ok(spec)
}

fn series(t: &degenkit::Tensor3) -> Vec<Vec<f64>> {
    let [_, time, dims] = t.dims();
    (0..dims).map(|d| (0..time).map(|s| t.frame(0, s)[d]).collect()).collect()
}

/// One trial of a task.
pub fn trial(task: &str, channels: usize, seed: u64) -> Result<TrialView> {
    let spec = task_by_name(task, channels)?;
    let b = generate(&spec, seed, 1)?;
    Ok(TrialView {
        task: spec.kind.name().to_string(),
        time: b.time(),
        inputs: series(&b.inputs),
        targets: series(&b.targets),
    })
}

#[derive(Debug, Serialize)]
pub struct ScanView {
    pub angles: Vec<f64>,
    /// `||A - C B C^T||_F` with C a rotation by each angle.
    pub rotations: Vec<f64>,
    /// Same with C a reflection across the line at half each angle.
    pub reflections: Vec<f64>,
    pub grid_min: f64,
    pub solver_distance: f64,
}

fn rot(theta: f64, reflect: bool) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    if reflect {
        DMatrix::from_row_slice(2, 2, &[c, s, s, -c])
    } else {
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }
}

/// Conjugacy distance over a grid of O(2) elements, next to the solver's answer.
pub fn rotation_scan(a: &[f64], b: &[f64], steps: usize) -> Result<ScanView> {
    if a.len() != 4 || b.len() != 4 {
        return Err(Error::InvalidArgument("operators are 2x2, given row-major as 4 numbers".into()));
    }
    if steps < 2 {
        return Err(Error::InvalidArgument("need at least 2 grid steps".into()));
    }
    let a = DMatrix::from_row_slice(2, 2, a);
    let b = DMatrix::from_row_slice(2, 2, b);
    let cost = |c: &DMatrix<f64>| (&a - c * &b * c.transpose()).norm();
    let angles: Vec<f64> = (0..steps).map(|i| std::f64::consts::TAU * i as f64 / steps as f64).collect();
    let rotations: Vec<f64> = angles.iter().map(|&t| cost(&rot(t, false))).collect();
    let reflections: Vec<f64> = angles.iter().map(|&t| cost(&rot(t, true))).collect();
    let grid_min = rotations.iter().chain(&reflections).copied().fold(f64::INFINITY, f64::min);
    let solver_distance = orthogonal_conjugacy(&a, &b, &ConjugacySolver::default(), 0)?.distance;
    Ok(ScanView {
        angles,
        rotations,
        reflections,
        grid_min,
        solver_distance,
    })
}

#[derive(Debug, Serialize)]
pub struct EnsembleView {
    pub seeds: Vec<u64>,
    pub final_losses: Vec<Option<f64>>,
    /// Normalized PIF distances between the trained recurrent matrices.
    pub pif: Vec<Vec<f64>>,
    pub coords: Vec<[f64; 2]>,
}

/// Train a few small flip-flop networks and embed their PIF distances.
pub fn ensemble_map(channels: usize, n_seeds: usize, width: usize, epochs: usize) -> Result<EnsembleView> {
    if !(2..=12).contains(&n_seeds) || !(2..=32).contains(&width) || epochs == 0 {
        return Err(Error::InvalidArgument("use 2-12 seeds, width 2-32 and at least one epoch".into()));
    }
    let spec = TaskSpec::flip_flop().with_channels(channels).with_trial_len(50);
    spec.validate()?;
    let mut cfg = TrainConfig::defaults_for(&spec.kind);
    cfg.lr = 1e-2;
    cfg.max_epochs = epochs;
    cfg.steps_per_epoch = 8;
    cfg.batch_size = 32;
    let seeds: Vec<u64> = (0..n_seeds as u64).collect();
    let nets = seeds
        .iter()
        .map(|&s| train(&spec, &ModelSpec::standard(width), &cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let w: Vec<&DMatrix<f64>> = nets.iter().map(|n| &n.params.w_h).collect();
    let d = pairwise_pif(&w, PIF_RESTARTS.min(8), 0, 1)?;
    let xy = mds_embed(d.values(), 2)?;
    Ok(EnsembleView {
        seeds,
        final_losses: nets.iter().map(|n| n.report.final_loss).collect(),
        pif: (0..n_seeds).map(|i| (0..n_seeds).map(|j| d.get(i, j)).collect()).collect(),
        coords: (0..n_seeds).map(|i| [xy[(i, 0)], xy[(i, 1)]]).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn trial_json(task: &str, channels: u32, seed: u32) -> std::result::Result<String, JsError> {
    to_js(trial(task, channels as usize, seed as u64))
}

#[wasm_bindgen]
pub fn rotation_scan_json(a: &[f64], b: &[f64], steps: u32) -> std::result::Result<String, JsError> {
    to_js(rotation_scan(a, b, steps as usize))
}

#[wasm_bindgen]
pub fn ensemble_map_json(channels: u32, n_seeds: u32, width: u32, epochs: u32) -> std::result::Result<String, JsError> {
    to_js(ensemble_map(channels as usize, n_seeds as usize, width as usize, epochs as usize))
}

//! Ensemble training and metric evaluation.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::behavior::{behavioral_degeneracy, ood_loss, BehaviorStats, OodResult};
use crate::dynamics::{mds_embed, pairwise_dsa, pairwise_svcca, DistanceMatrix, MetricTag};
use crate::error::{Error, Result};
use crate::feature::{empirical_ntk, kernel_alignment, representation_alignment, weight_change_norm, NtkStep};
use crate::par::par_map;
use crate::probes::{estimate_memory_demand, MemoryDemand};
use crate::rng::{derive_seed, Stream};
use crate::tasks::{generate, make_ood_variant};
use crate::tensor::Tensor3;
use crate::training::{nuclear_norm, train, TrainedNetwork};
use crate::weights::{pairwise_pif, PIF_RESTARTS};

use super::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use super::config::{ExperimentConfig, Metric, SweepPoint};

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; 0 means 1.
    pub jobs: usize,
    /// Where member checkpoints go, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

/// Trained members of one sweep point, in seed order.
pub type Ensemble = Vec<TrainedNetwork>;

fn checkpoint_names(label: &str, seed: u64) -> [String; 2] {
    [
        format!("{label}/seed_{seed}_init.rnnd"),
        format!("{label}/seed_{seed}_final.rnnd"),
    ]
}

/// Train every (sweep point, seed) pair, optionally writing checkpoints.
///
/// A member whose training hit a numeric failure is kept and flagged in its
/// report; any other error aborts.
pub fn train_ensembles(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<Ensemble>> {
    let points = cfg.points()?;
    let seeds = cfg.ensemble.seeds();
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results = par_map(jobs.len(), opts.jobs, |j| -> Result<TrainedNetwork> {
        let (p, seed) = jobs[j];
        let pt = &points[p];
        log::info!("training point {} seed {seed}", pt.label);
        let mut net = train(&pt.task, &pt.model, &pt.train, seed)?;
        if let Some(dir) = &opts.checkpoint_dir {
            let [init, fin] = checkpoint_names(&pt.label, seed);
            net.report.initial_checkpoint = Some(init.clone());
            net.report.final_checkpoint = Some(fin.clone());
            let hash = pt.training_hash();
            save_checkpoint(
                &dir.join(&init),
                &Checkpoint {
                    params: net.initial.clone(),
                    seed,
                    config_hash: hash.clone(),
                    report: None,
                },
            )?;
            save_checkpoint(
                &dir.join(&fin),
                &Checkpoint {
                    params: net.params.clone(),
                    seed,
                    config_hash: hash,
                    report: Some(net.report.clone()),
                },
            )?;
        }
        Ok(net)
    });
    let mut flat = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter();
    Ok(points
        .iter()
        .map(|_| flat.by_ref().take(seeds.len()).collect())
        .collect())
}

/// Read back the members written by [`train_ensembles`].
pub fn load_ensembles(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<Ensemble>> {
    let points = cfg.points()?;
    points
        .iter()
        .map(|pt| {
            let hash = pt.training_hash();
            cfg.ensemble
                .seeds()
                .into_iter()
                .map(|seed| {
                    let [init, fin] = checkpoint_names(&pt.label, seed);
                    let a = load_checkpoint(&dir.join(&init))?;
                    let b = load_checkpoint(&dir.join(&fin))?;
                    for (c, name) in [(&a, &init), (&b, &fin)] {
                        if c.config_hash != hash || c.seed != seed {
                            return Err(Error::invalid(format!(
                                "{name} was written by a different configuration"
                            )));
                        }
                    }
                    let report = b
                        .report
                        .ok_or_else(|| Error::CorruptCheckpoint(format!("{fin} has no training record")))?;
                    Ok(TrainedNetwork {
                        report,
                        initial: a.params,
                        params: b.params,
                    })
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemberResult {
    pub seed: u64,
    pub converged: bool,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub failure: Option<String>,
    pub checkpoint: Option<String>,
    pub w_h_nuclear_norm: f64,
    pub ood_loss: Option<f64>,
    pub weight_change: Option<f64>,
    pub kernel_alignment: Option<f64>,
    pub representation_alignment: Option<f64>,
    #[serde(skip)]
    pub loss_curve: Vec<f64>,
}

/// Mean pairwise distance, converged members only (headline) and overall.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistanceSummary {
    pub mean: Option<f64>,
    pub mean_all: f64,
    pub n_converged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DsaSummary {
    #[serde(flatten)]
    pub distance: DistanceSummary,
    pub k: usize,
    pub lag: usize,
    pub unconverged_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BehaviorSummary {
    /// Population std of OOD losses over converged members; absent with
    /// fewer than two.
    pub sigma_ood: Option<f64>,
    pub mean_ood: Option<f64>,
    pub n_converged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureSummary {
    pub weight_change: f64,
    pub kernel_alignment: f64,
    pub representation_alignment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeSummary {
    pub h_star: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointResult {
    pub label: String,
    pub value: Option<f64>,
    pub members: Vec<MemberResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dsa: Option<DsaSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pif: Option<DistanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svcca: Option<DistanceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub behavior: Option<BehaviorSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_learning: Option<FeatureSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSummary>,
    /// Which distance matrix the MDS coordinates embed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mds_metric: Option<MetricTag>,
    /// Metrics dropped because of a numeric failure, with the reason.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
    #[serde(skip)]
    pub distances: Vec<DistanceMatrix>,
    #[serde(skip)]
    pub mds: Option<DMatrix<f64>>,
    #[serde(skip)]
    pub probe_curve: Option<MemoryDemand>,
}

impl PointResult {
    pub fn distance(&self, metric: MetricTag) -> Option<&DistanceMatrix> {
        self.distances.iter().find(|d| d.metric == metric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultsBundle {
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    /// Some member hit a numeric failure.
    pub partial: bool,
    pub points: Vec<PointResult>,
}

/// A numeric failure inside one metric drops that metric, not the run.
fn soft<T>(metric: Metric, r: Result<T>, skipped: &mut Vec<String>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NumericFailure { location, detail }) => {
            log::warn!("{metric} skipped: {location}: {detail}");
            skipped.push(format!("{metric}: {location}: {detail}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn summarize(d: &DistanceMatrix, converged: &[usize]) -> DistanceSummary {
    let mean = (converged.len() >= 2).then(|| d.select(converged).mean_off_diagonal());
    DistanceSummary {
        mean,
        mean_all: d.mean_off_diagonal(),
        n_converged: converged.len(),
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Hidden states of every member on one batch.
fn hidden_states(nets: &[&crate::rnn::RnnParams], inputs: &Tensor3, jobs: usize) -> Result<Vec<Tensor3>> {
    par_map(nets.len(), jobs, |i| nets[i].forward(inputs).map(|(_, h)| h.0))
        .into_iter()
        .collect()
}

fn analyze_point(cfg: &ExperimentConfig, index: usize, pt: &SweepPoint, nets: &[TrainedNetwork], jobs: usize) -> Result<PointResult> {
    let base = cfg.ensemble.base_seed;
    let converged: Vec<usize> = (0..nets.len()).filter(|&i| nets[i].report.converged).collect();
    let mut members: Vec<MemberResult> = nets
        .iter()
        .map(|n| {
            let r = &n.report;
            Ok(MemberResult {
                seed: r.seed,
                converged: r.converged,
                epochs_run: r.epochs_run,
                final_loss: r.final_loss,
                failure: r.failure.as_ref().map(|f| format!("epoch {} step {}: {}", f.epoch, f.step, f.message)),
                checkpoint: r.final_checkpoint.clone(),
                w_h_nuclear_norm: nuclear_norm(&n.params.w_h)?,
                ood_loss: None,
                weight_change: None,
                kernel_alignment: None,
                representation_alignment: None,
                loss_curve: r.loss_curve.clone(),
            })
        })
        .collect::<Result<_>>()?;
    let mut out = PointResult {
        label: pt.label.clone(),
        value: pt.value,
        members: Vec::new(),
        dsa: None,
        pif: None,
        svcca: None,
        behavior: None,
        feature_learning: None,
        probe: None,
        mds_metric: None,
        skipped: Vec::new(),
        distances: Vec::new(),
        mds: None,
        probe_curve: None,
    };

    let finals: Vec<&crate::rnn::RnnParams> = nets.iter().map(|n| &n.params).collect();
    let needs_states = cfg.wants(Metric::Dsa) || cfg.wants(Metric::Svcca) || cfg.wants(Metric::FeatureLearning);
    let eval = generate(&pt.task, derive_seed(base, Stream::Eval, index as u64, 0), cfg.eval.batch)?;
    let states = if needs_states { hidden_states(&finals, &eval.inputs, jobs)? } else { Vec::new() };
    let state_refs: Vec<&Tensor3> = states.iter().collect();

    if cfg.wants(Metric::Dsa) {
        let solver_seed = derive_seed(base, Stream::Solver, index as u64, 0);
        if let Some(ens) = soft(Metric::Dsa, pairwise_dsa(&state_refs, &cfg.dsa, solver_seed, jobs), &mut out.skipped)? {
            out.dsa = Some(DsaSummary {
                distance: summarize(&ens.distances, &converged),
                k: ens.k,
                lag: ens.lag,
                unconverged_pairs: ens.unconverged_pairs,
            });
            out.distances.push(ens.distances);
        }
    }
    if cfg.wants(Metric::Pif) {
        let w: Vec<&DMatrix<f64>> = finals.iter().map(|p| &p.w_h).collect();
        let d = pairwise_pif(&w, PIF_RESTARTS, derive_seed(base, Stream::Solver, index as u64, 1), jobs);
        if let Some(d) = soft(Metric::Pif, d, &mut out.skipped)? {
            out.pif = Some(summarize(&d, &converged));
            out.distances.push(d);
        }
    }
    if cfg.wants(Metric::Svcca) {
        if let Some(d) = soft(Metric::Svcca, pairwise_svcca(&state_refs, jobs), &mut out.skipped)? {
            out.svcca = Some(summarize(&d, &converged));
            out.distances.push(d);
        }
    }
    if cfg.wants(Metric::Mds) {
        if let Some(d) = out.distances.first() {
            let metric = d.metric;
            if let Some(coords) = soft(Metric::Mds, mds_embed(d.values(), 2), &mut out.skipped)? {
                out.mds_metric = Some(metric);
                out.mds = Some(coords);
            }
        } else {
            out.skipped.push("mds: no distance matrix".into());
        }
    }

    if cfg.wants(Metric::Behavior) {
        let spec_ood = make_ood_variant(&pt.task)?;
        let seed = derive_seed(base, Stream::Ood, index as u64, 0);
        let losses = par_map(nets.len(), jobs, |i| match ood_loss(&nets[i].params, &spec_ood, seed, cfg.eval.ood_batch) {
            Ok(l) => Ok(Some(l)),
            Err(Error::NumericFailure { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let results: Vec<OodResult> = nets
            .iter()
            .zip(&losses)
            .filter_map(|(n, l)| {
                l.map(|ood_loss| OodResult {
                    network_id: n.report.seed,
                    ood_loss,
                    converged: n.report.converged,
                })
            })
            .collect();
        let stats: Option<BehaviorStats> = match behavioral_degeneracy(&results) {
            Ok(s) => Some(s),
            Err(Error::InsufficientData(msg)) => {
                log::warn!("point {}: {msg}", pt.label);
                None
            }
            Err(e) => return Err(e),
        };
        for (m, l) in members.iter_mut().zip(&losses) {
            m.ood_loss = *l;
        }
        out.behavior = Some(BehaviorSummary {
            sigma_ood: stats.map(|s| s.sigma),
            mean_ood: stats.map(|s| s.mean),
            n_converged: results.iter().filter(|r| r.converged).count(),
        });
    }

    if cfg.wants(Metric::FeatureLearning) {
        let initials: Vec<&crate::rnn::RnnParams> = nets.iter().map(|n| &n.initial).collect();
        let states0 = hidden_states(&initials, &eval.inputs, jobs)?;
        let probe_id = derive_seed(base, Stream::Kernel, index as u64, 0);
        let probe = generate(&pt.task, probe_id, cfg.eval.ntk_trials)?;
        let per_member = par_map(nets.len(), jobs, |i| -> Result<[f64; 3]> {
            let n = &nets[i];
            let wc = weight_change_norm(&n.params.w_h, &n.initial.w_h, true)?;
            let k0 = empirical_ntk(&n.initial, &probe.inputs, probe_id, NtkStep::Final, cfg.eval.ntk_params.mask())?;
            let kf = empirical_ntk(&n.params, &probe.inputs, probe_id, NtkStep::Final, cfg.eval.ntk_params.mask())?;
            let ka = kernel_alignment(&kf, &k0)?;
            let ra = representation_alignment(&states[i], &states0[i])?;
            Ok([wc, ka, ra])
        });
        let mut ok = Vec::new();
        for (m, r) in members.iter_mut().zip(per_member) {
            if let Some(v) = soft(Metric::FeatureLearning, r, &mut out.skipped)? {
                m.weight_change = Some(v[0]);
                m.kernel_alignment = Some(v[1]);
                m.representation_alignment = Some(v[2]);
                ok.push(v);
            }
        }
        if !ok.is_empty() {
            let col = |k: usize| mean(&ok.iter().map(|v| v[k]).collect::<Vec<_>>());
            out.feature_learning = Some(FeatureSummary {
                weight_change: col(0),
                kernel_alignment: col(1),
                representation_alignment: col(2),
            });
        }
    }

    if cfg.wants(Metric::Probe) {
        let demand = estimate_memory_demand(&pt.task, &cfg.probe, base, jobs)?;
        out.probe = Some(ProbeSummary { h_star: demand.h_star });
        out.probe_curve = Some(demand);
    }

    out.members = members;
    Ok(out)
}

/// Evaluate the requested metrics on already trained ensembles.
pub fn analyze(cfg: &ExperimentConfig, ensembles: &[Ensemble], jobs: usize) -> Result<ResultsBundle> {
    let points = cfg.points()?;
    if ensembles.len() != points.len() || ensembles.iter().any(|e| e.len() != cfg.ensemble.n_seeds) {
        return Err(Error::invalid("ensembles do not match the configured sweep and seeds"));
    }
    let results = points
        .iter()
        .zip(ensembles)
        .enumerate()
        .map(|(i, (pt, nets))| analyze_point(cfg, i, pt, nets, jobs))
        .collect::<Result<Vec<_>>>()?;
    Ok(ResultsBundle {
        provenance: Provenance {
            config_hash: cfg.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            base_seed: cfg.ensemble.base_seed,
            seeds: cfg.ensemble.seeds(),
        },
        config: cfg.clone(),
        partial: ensembles.iter().flatten().any(|n| n.report.failure.is_some()),
        points: results,
    })
}

/// Memory demand of every sweep point's task, without training anything.
///
/// Uses the same seeds as the `probe` metric inside [`analyze`].
pub fn probe_points(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<(SweepPoint, MemoryDemand)>> {
    cfg.points()?
        .into_iter()
        .map(|pt| {
            let d = estimate_memory_demand(&pt.task, &cfg.probe, cfg.ensemble.base_seed, jobs)?;
            Ok((pt, d))
        })
        .collect()
}

/// Train, then analyze.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultsBundle> {
    let ensembles = train_ensembles(cfg, opts)?;
    analyze(cfg, &ensembles, opts.jobs)
}

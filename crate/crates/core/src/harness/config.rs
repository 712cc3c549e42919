//! Experiment configuration, read from TOML.
//!
//! Only `task.kind` is required; every other key falls back to the per-task
//! defaults. Unknown keys are rejected. See `configs/` in the
//! repository for annotated files.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::DsaConfig;
use crate::error::{Error, Result};
use crate::feature::ParamMask;
use crate::probes::{HistoryLayout, ProbeConfig};
use crate::rnn::Parameterization;
use crate::tasks::TaskSpec;
use crate::training::{default_tau, ModelSpec, Regularizer, Scheduler, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Dsa,
    Pif,
    Svcca,
    Behavior,
    FeatureLearning,
    Probe,
    Mds,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Dsa,
        Metric::Pif,
        Metric::Svcca,
        Metric::Behavior,
        Metric::FeatureLearning,
        Metric::Probe,
        Metric::Mds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Dsa => "dsa",
            Metric::Pif => "pif",
            Metric::Svcca => "svcca",
            Metric::Behavior => "behavior",
            Metric::FeatureLearning => "feature_learning",
            Metric::Probe => "probe",
            Metric::Mds => "mds",
        }
    }

    /// Metrics that compare members and so need two or more seeds.
    pub fn needs_ensemble(self) -> bool {
        !matches!(self, Metric::FeatureLearning | Metric::Probe)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{s}`")))
    }
}

/// Parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "task.channels")]
    Channels,
    #[serde(rename = "task.trial_len")]
    TrialLen,
    #[serde(rename = "model.width")]
    Width,
    #[serde(rename = "model.gamma")]
    Gamma,
    #[serde(rename = "train.lambda_rank")]
    LambdaRank,
    #[serde(rename = "train.lambda_l1")]
    LambdaL1,
    #[serde(rename = "train.lr")]
    Lr,
}

impl SweepParam {
    fn is_integer(self) -> bool {
        matches!(self, SweepParam::Channels | SweepParam::TrialLen | SweepParam::Width)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParam,
    /// Strictly increasing or strictly decreasing.
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_seeds: usize,
    /// Members use seeds `base_seed .. base_seed + n_seeds`.
    pub base_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { n_seeds: 8, base_seed: 0 }
    }
}

impl EnsembleConfig {
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.base_seed + i).collect()
    }
}

/// Parameters the empirical NTK differentiates with respect to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NtkParams {
    /// `W_h`, `W_x`, `W_out`. Under muP the output bias gradient does not
    /// shrink with `1 / (gamma N)` and would otherwise swamp the kernel.
    #[default]
    Weights,
    All,
}

impl NtkParams {
    pub fn mask(self) -> ParamMask {
        match self {
            NtkParams::Weights => ParamMask::weights(),
            NtkParams::All => ParamMask::all(),
        }
    }
}

/// Sizes of the shared evaluation batches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Trials whose hidden states feed DSA, SVCCA and representation alignment.
    pub batch: usize,
    pub ood_batch: usize,
    /// Trials in the fixed NTK probe batch.
    pub ntk_trials: usize,
    pub ntk_params: NtkParams,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            batch: 32,
            ood_batch: 256,
            ntk_trials: 8,
            ntk_params: NtkParams::Weights,
        }
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub ensemble: EnsembleConfig,
    pub sweep: Option<SweepAxis>,
    /// Sorted and deduplicated.
    pub metrics: Vec<Metric>,
    pub dsa: DsaConfig,
    pub probe: ProbeConfig,
    pub eval: EvalConfig,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// One point of a sweep with the configs it resolves to.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    /// Used in file names: the value as printed, or `base` without a sweep.
    pub label: String,
    pub value: Option<f64>,
    pub task: TaskSpec,
    pub model: ModelSpec,
    pub train: TrainConfig,
}

impl SweepPoint {
    /// Hash of what determines a member's weights besides its seed. Stored in
    /// checkpoints so analysis can change metrics without retraining.
    pub fn training_hash(&self) -> String {
        let parts = (&self.task, &self.model, &self.train);
        sha256_hex(&serde_json::to_vec(&parts).expect("config serializes"))
    }
}

impl ExperimentConfig {
    /// Defaults for `task`, no sweep, no metrics.
    pub fn for_task(task: TaskSpec) -> Self {
        let probe = ProbeConfig::for_task(&task);
        Self {
            model: ModelSpec::standard(64),
            train: TrainConfig::defaults_for(&task.kind),
            ensemble: EnsembleConfig::default(),
            sweep: None,
            metrics: Vec::new(),
            dsa: DsaConfig::default(),
            probe,
            eval: EvalConfig::default(),
            task,
        }
    }

    pub fn wants(&self, m: Metric) -> bool {
        self.metrics.contains(&m)
    }

    pub fn set_metrics(&mut self, metrics: impl IntoIterator<Item = Metric>) {
        let mut m: Vec<Metric> = metrics.into_iter().collect();
        m.sort();
        m.dedup();
        self.metrics = m;
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let base = SweepPoint {
            label: "base".into(),
            value: None,
            task: self.task.clone(),
            model: self.model,
            train: self.train,
        };
        let Some(axis) = &self.sweep else {
            return Ok(vec![base]);
        };
        axis.values
            .iter()
            .map(|&v| {
                let mut p = base.clone();
                p.label = format!("{v}");
                p.value = Some(v);
                match axis.parameter {
                    SweepParam::Channels => p.task.channels = v as usize,
                    SweepParam::TrialLen => p.task.trial_len = v as usize,
                    SweepParam::Width => p.model.width = v as usize,
                    SweepParam::Gamma => match &mut p.model.parameterization {
                        Parameterization::Mup { gamma, .. } => *gamma = v,
                        Parameterization::Standard => {
                            return Err(Error::invalid("sweeping model.gamma needs model.mode = \"mup\""))
                        }
                    },
                    SweepParam::LambdaRank => p.train.regularizer.lambda_rank = v,
                    SweepParam::LambdaL1 => p.train.regularizer.lambda_l1 = v,
                    SweepParam::Lr => p.train.lr = v,
                }
                p.task.validate()?;
                p.model.validate()?;
                p.train.validate()?;
                Ok(p)
            })
            .collect()
    }

    /// Re-validate after editing fields directly.
    pub fn check(&self) -> Result<()> {
        self.validate()
            .map_err(|(path, e)| Error::invalid(format!("{path}: {}", e.to_string().trim_start_matches("invalid argument: "))))
    }

    fn validate(&self) -> std::result::Result<(), (String, Error)> {
        let at = |path: &str| {
            let path = path.to_string();
            move |e: Error| (path, e)
        };
        self.task.validate().map_err(at("task"))?;
        self.model.validate().map_err(at("model"))?;
        self.train.validate().map_err(at("train"))?;
        self.dsa.validate().map_err(at("dsa"))?;
        self.probe.validate().map_err(at("probe"))?;
        if self.ensemble.n_seeds == 0 {
            return Err(("ensemble.n_seeds".into(), Error::invalid("n_seeds must be at least 1")));
        }
        if self.ensemble.n_seeds < 2 && self.metrics.iter().any(|m| m.needs_ensemble()) {
            return Err((
                "ensemble.n_seeds".into(),
                Error::invalid("degeneracy metrics need n_seeds >= 2"),
            ));
        }
        if self.wants(Metric::Mds) && ![Metric::Dsa, Metric::Pif, Metric::Svcca].iter().any(|m| self.wants(*m)) {
            return Err(("metrics".into(), Error::invalid("mds embeds a distance metric: add dsa, pif or svcca")));
        }
        if self.eval.batch == 0 || self.eval.ood_batch == 0 || self.eval.ntk_trials == 0 {
            return Err(("eval".into(), Error::invalid("evaluation batch sizes must be positive")));
        }
        if let Some(axis) = &self.sweep {
            let v = &axis.values;
            if v.is_empty() {
                return Err(("sweep.values".into(), Error::invalid("sweep needs at least one value")));
            }
            let up = v.windows(2).all(|w| w[0] < w[1]);
            let down = v.windows(2).all(|w| w[0] > w[1]);
            if !(up || down) || v.iter().any(|x| !x.is_finite()) {
                return Err(("sweep.values".into(), Error::invalid("sweep values must be strictly ordered")));
            }
            if axis.parameter.is_integer() && v.iter().any(|x| *x < 1.0 || x.fract() != 0.0) {
                return Err((
                    "sweep.values".into(),
                    Error::invalid("this sweep parameter takes positive integers"),
                ));
            }
            self.points().map_err(at("sweep"))?;
        }
        Ok(())
    }

    /// TOML text that parses back to this config.
    pub fn to_toml(&self) -> String {
        toml::to_string(&RawConfig::from(self)).expect("config serializes to TOML")
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    /// `standard` or `mup`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steps_per_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    early_stop_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    early_stop_patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda_rank: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda_l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scheduler: Option<Scheduler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grad_clip: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProbe {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h_range: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hidden_units: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_inits: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    test_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    plateau_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layout: Option<HistoryLayout>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pad_history: Option<bool>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    metrics: Vec<Metric>,
    task: TaskSpec,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    train: RawTrain,
    #[serde(default)]
    ensemble: EnsembleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<SweepAxis>,
    #[serde(default)]
    dsa: DsaConfig,
    #[serde(default)]
    probe: RawProbe,
    #[serde(default)]
    eval: EvalConfig,
}

impl From<&ExperimentConfig> for RawConfig {
    fn from(c: &ExperimentConfig) -> Self {
        let (mode, gamma, tau) = match c.model.parameterization {
            Parameterization::Standard => ("standard", None, None),
            Parameterization::Mup { gamma, tau } => ("mup", Some(gamma), Some(tau)),
        };
        let t = &c.train;
        let p = &c.probe;
        RawConfig {
            metrics: c.metrics.clone(),
            task: c.task.clone(),
            model: RawModel {
                width: Some(c.model.width),
                mode: Some(mode.into()),
                gamma,
                tau,
            },
            train: RawTrain {
                lr: Some(t.lr),
                max_epochs: Some(t.max_epochs),
                steps_per_epoch: Some(t.steps_per_epoch),
                batch_size: Some(t.batch_size),
                early_stop_threshold: Some(t.early_stop_threshold),
                early_stop_patience: Some(t.early_stop_patience),
                lambda_rank: Some(t.regularizer.lambda_rank),
                lambda_l1: Some(t.regularizer.lambda_l1),
                scheduler: Some(t.scheduler),
                grad_clip: t.grad_clip,
            },
            ensemble: c.ensemble,
            sweep: c.sweep.clone(),
            dsa: c.dsa,
            probe: RawProbe {
                h_range: Some(p.h_range.clone()),
                hidden_units: Some(p.hidden_units),
                epochs: Some(p.epochs),
                n_inits: Some(p.n_inits),
                test_fraction: Some(p.test_fraction),
                n_trials: Some(p.n_trials),
                lr: Some(p.lr),
                batch_size: Some(p.batch_size),
                plateau_tol: Some(p.plateau_tol),
                noise_floor: Some(p.noise_floor),
                layout: Some(p.layout),
                pad_history: Some(p.pad_history),
            },
            eval: c.eval,
        }
    }
}

fn resolve(raw: RawConfig) -> std::result::Result<ExperimentConfig, (String, Error)> {
    let task = raw.task;
    let mut cfg = ExperimentConfig::for_task(task.clone());

    let m = raw.model;
    cfg.model.width = m.width.unwrap_or(64);
    cfg.model.parameterization = match m.mode.as_deref().unwrap_or("standard") {
        "standard" => {
            if m.gamma.is_some() || m.tau.is_some() {
                return Err((
                    "model".into(),
                    Error::invalid("gamma and tau only apply to mode = \"mup\""),
                ));
            }
            Parameterization::Standard
        }
        "mup" => Parameterization::Mup {
            gamma: m.gamma.unwrap_or(1.0),
            tau: m.tau.unwrap_or_else(|| default_tau(&task.kind)),
        },
        other => {
            return Err((
                "model.mode".into(),
                Error::invalid(format!("unknown mode `{other}`, expected `standard` or `mup`")),
            ))
        }
    };

    let t = raw.train;
    let d = cfg.train;
    cfg.train = TrainConfig {
        lr: t.lr.unwrap_or(d.lr),
        scheduler: t.scheduler.unwrap_or(d.scheduler),
        max_epochs: t.max_epochs.unwrap_or(d.max_epochs),
        steps_per_epoch: t.steps_per_epoch.unwrap_or(d.steps_per_epoch),
        batch_size: t.batch_size.unwrap_or(d.batch_size),
        early_stop_threshold: t.early_stop_threshold.unwrap_or(d.early_stop_threshold),
        early_stop_patience: t.early_stop_patience.unwrap_or(d.early_stop_patience),
        regularizer: Regularizer {
            lambda_rank: t.lambda_rank.unwrap_or(0.0),
            lambda_l1: t.lambda_l1.unwrap_or(0.0),
        },
        grad_clip: t.grad_clip,
    };
    if let Err(e) = cfg.train.regularizer.validate() {
        let key = if cfg.train.regularizer.lambda_rank < 0.0 { "lambda_rank" } else { "lambda_l1" };
        return Err((format!("train.{key}"), e));
    }

    let p = raw.probe;
    let d = cfg.probe.clone();
    cfg.probe = ProbeConfig {
        h_range: p.h_range.unwrap_or(d.h_range),
        hidden_units: p.hidden_units.unwrap_or(d.hidden_units),
        epochs: p.epochs.unwrap_or(d.epochs),
        n_inits: p.n_inits.unwrap_or(d.n_inits),
        test_fraction: p.test_fraction.unwrap_or(d.test_fraction),
        n_trials: p.n_trials.unwrap_or(d.n_trials),
        lr: p.lr.unwrap_or(d.lr),
        batch_size: p.batch_size.unwrap_or(d.batch_size),
        plateau_tol: p.plateau_tol.unwrap_or(d.plateau_tol),
        noise_floor: p.noise_floor.unwrap_or(d.noise_floor),
        layout: p.layout.unwrap_or(d.layout),
        pad_history: p.pad_history.unwrap_or(d.pad_history),
    };

    cfg.ensemble = raw.ensemble;
    cfg.sweep = raw.sweep;
    cfg.dsa = raw.dsa;
    cfg.eval = raw.eval;
    cfg.set_metrics(raw.metrics);
    cfg.validate()?;
    Ok(cfg)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Best-effort line of a dotted key: the key inside its table, else the
/// table header.
fn line_of_path(text: &str, path: &str) -> Option<usize> {
    let (table, key) = match path.split_once('.') {
        Some((t, k)) => (t, Some(k)),
        None => (path, None),
    };
    let mut current = String::new();
    let mut header = None;
    for (i, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == table {
                header = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        let hit = match key {
            Some(key) => (current == table && k == key) || (current.is_empty() && k == path),
            None => current.is_empty() && (k == table || k.starts_with(&format!("{table}."))),
        };
        if hit {
            return Some(i + 1);
        }
    }
    header
}

/// Parse and validate a TOML experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Parse {
        path: String::new(),
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let line = inner
            .span()
            .map(|s| line_of_offset(text, s.start))
            .or_else(|| line_of_path(text, &path));
        Error::Parse {
            path,
            line,
            message: inner.message().to_string(),
        }
    })?;
    resolve(raw).map_err(|(path, e)| Error::Parse {
        line: line_of_path(text, &path),
        path,
        message: e.to_string(),
    })
}

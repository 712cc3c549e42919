//! Seeded trial generators for the four task suites.
//!
//! Every generator is a pure function of `(spec, seed, batch)`: the seed keys a
//! ChaCha8 stream (see [`crate::rng`]) and draws are consumed in a fixed order,
//! so identical arguments give bit-identical batches.

mod delayed;
mod flip_flop;
mod path;
mod sine;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

pub use delayed::{gen_delayed_discrimination, DelayedParams, PRE_STIMULUS_STEPS, PULSE_STEPS};
pub use flip_flop::{gen_nbff, hold_last_nonzero, FlipFlopParams};
pub use path::{gen_path_integration, integrate_step, PathParams};
pub use sine::{gen_sinewave, SineParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodMode {
    None,
    DoubledTrialLength,
    DoubledDelay,
}

/// Task family together with its parameter block.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskKind {
    NBitFlipFlop(FlipFlopParams),
    DelayedDiscrimination(DelayedParams),
    SineWaveGeneration(SineParams),
    PathIntegration(PathParams),
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::NBitFlipFlop(_) => "nbit_flip_flop",
            TaskKind::DelayedDiscrimination(_) => "delayed_discrimination",
            TaskKind::SineWaveGeneration(_) => "sine_wave_generation",
            TaskKind::PathIntegration(_) => "path_integration",
        }
    }

    fn default_trial_len(&self) -> usize {
        match self {
            TaskKind::DelayedDiscrimination(_) => 60,
            _ => 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TaskSpecRepr", into = "TaskSpecRepr")]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Number of independent input/output copies of the task.
    pub channels: usize,
    pub trial_len: usize,
    pub ood_mode: OodMode,
}

impl TaskSpec {
    /// Spec with the default parameter block and trial length for `kind`.
    pub fn new(kind: TaskKind) -> Self {
        let trial_len = kind.default_trial_len();
        Self {
            kind,
            channels: 1,
            trial_len,
            ood_mode: OodMode::None,
        }
    }

    pub fn flip_flop() -> Self {
        Self::new(TaskKind::NBitFlipFlop(FlipFlopParams::default()))
    }

    pub fn delayed_discrimination() -> Self {
        Self::new(TaskKind::DelayedDiscrimination(DelayedParams::default()))
    }

    pub fn sine_wave() -> Self {
        Self::new(TaskKind::SineWaveGeneration(SineParams::default()))
    }

    pub fn path_integration(dims: usize) -> Self {
        Self::new(TaskKind::PathIntegration(PathParams {
            dims,
            ..PathParams::default()
        }))
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn with_trial_len(mut self, trial_len: usize) -> Self {
        self.trial_len = trial_len;
        self
    }

    pub fn input_dim(&self) -> usize {
        let per_channel = match &self.kind {
            TaskKind::NBitFlipFlop(_) | TaskKind::DelayedDiscrimination(_) => 1,
            TaskKind::SineWaveGeneration(_) => 1,
            TaskKind::PathIntegration(p) => {
                if p.start_cue {
                    2 * p.dims
                } else {
                    p.dims
                }
            }
        };
        per_channel * self.channels
    }

    pub fn output_dim(&self) -> usize {
        let per_channel = match &self.kind {
            TaskKind::NBitFlipFlop(_) | TaskKind::SineWaveGeneration(_) => 1,
            TaskKind::DelayedDiscrimination(p) => {
                if p.aux_magnitude {
                    2
                } else {
                    1
                }
            }
            TaskKind::PathIntegration(p) => p.dims,
        };
        per_channel * self.channels
    }

    /// Checks parameter ranges and that a trial fits in `trial_len`.
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::invalid("channels must be positive"));
        }
        if self.trial_len == 0 {
            return Err(Error::invalid("trial_len must be positive"));
        }
        match &self.kind {
            TaskKind::NBitFlipFlop(p) => p.validate(),
            TaskKind::DelayedDiscrimination(p) => p.validate(self.trial_len),
            TaskKind::SineWaveGeneration(p) => p.validate(),
            TaskKind::PathIntegration(p) => p.validate(),
        }
    }
}

/// One batch of trials.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialBatch {
    pub inputs: Tensor3,
    pub targets: Tensor3,
    pub loss_mask: Tensor3,
}

impl TrialBatch {
    pub(crate) fn zeros(spec: &TaskSpec, batch: usize) -> Self {
        let t = spec.trial_len;
        Self {
            inputs: Tensor3::zeros(batch, t, spec.input_dim()),
            targets: Tensor3::zeros(batch, t, spec.output_dim()),
            loss_mask: Tensor3::zeros(batch, t, spec.output_dim()),
        }
    }

    pub fn batch(&self) -> usize {
        self.inputs.batch()
    }

    pub fn time(&self) -> usize {
        self.inputs.time()
    }
}

fn check_batch(spec: &TaskSpec, batch: usize) -> Result<()> {
    if batch == 0 {
        return Err(Error::invalid("batch must be positive"));
    }
    spec.validate()
}

/// Generate a batch for any task kind.
pub fn generate(spec: &TaskSpec, seed: u64, batch: usize) -> Result<TrialBatch> {
    match spec.kind {
        TaskKind::NBitFlipFlop(_) => gen_nbff(spec, seed, batch),
        TaskKind::DelayedDiscrimination(_) => gen_delayed_discrimination(spec, seed, batch),
        TaskKind::SineWaveGeneration(_) => gen_sinewave(spec, seed, batch),
        TaskKind::PathIntegration(_) => gen_path_integration(spec, seed, batch),
    }
}

/// Temporal-generalization variant: doubled delay for delayed discrimination,
/// doubled trial length for everything else.
pub fn make_ood_variant(spec: &TaskSpec) -> Result<TaskSpec> {
    if spec.ood_mode != OodMode::None {
        return Err(Error::invalid("spec is already an out-of-distribution variant"));
    }
    let mut out = spec.clone();
    match &mut out.kind {
        TaskKind::DelayedDiscrimination(p) => {
            let extra = p.delay_max;
            p.delay_min *= 2;
            p.delay_max *= 2;
            out.trial_len += extra;
            out.ood_mode = OodMode::DoubledDelay;
        }
        _ => {
            out.trial_len *= 2;
            out.ood_mode = OodMode::DoubledTrialLength;
        }
    }
    Ok(out)
}

/// Flat on-disk form of [`TaskSpec`]; kind-specific keys sit next to `kind`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSpecRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trial_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ood_mode: Option<OodMode>,
    // flip-flop
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_switch: Option<f64>,
    // delayed discrimination
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delay_min: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delay_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stim_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stim_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aux_magnitude: Option<bool>,
    // sine
    #[serde(default, skip_serializing_if = "Option::is_none")]
    freq_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    freq_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_freq: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dt: Option<f64>,
    // path integration
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dims: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    speed_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_stop: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean_go: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    arena_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_cue: Option<bool>,
}

impl TaskSpecRepr {
    fn foreign_keys(&self, allowed: &[&str]) -> Vec<&'static str> {
        let present: [(&'static str, bool); 19] = [
            ("p_switch", self.p_switch.is_some()),
            ("delay_min", self.delay_min.is_some()),
            ("delay_max", self.delay_max.is_some()),
            ("stim_min", self.stim_min.is_some()),
            ("stim_max", self.stim_max.is_some()),
            ("aux_magnitude", self.aux_magnitude.is_some()),
            ("freq_min", self.freq_min.is_some()),
            ("freq_max", self.freq_max.is_some()),
            ("n_freq", self.n_freq.is_some()),
            ("dt", self.dt.is_some()),
            ("dims", self.dims.is_some()),
            ("v_max", self.v_max.is_some()),
            ("direction_std", self.direction_std.is_some()),
            ("speed_std", self.speed_std.is_some()),
            ("noise_std", self.noise_std.is_some()),
            ("mean_stop", self.mean_stop.is_some()),
            ("mean_go", self.mean_go.is_some()),
            ("arena_size", self.arena_size.is_some()),
            ("start_cue", self.start_cue.is_some()),
        ];
        present
            .into_iter()
            .filter(|(k, set)| *set && !allowed.contains(k))
            .map(|(k, _)| k)
            .collect()
    }
}

impl TryFrom<TaskSpecRepr> for TaskSpec {
    type Error = String;

    fn try_from(r: TaskSpecRepr) -> std::result::Result<Self, String> {
        let (kind, allowed): (TaskKind, &[&str]) = match r.kind.as_str() {
            "nbit_flip_flop" | "flip_flop" => {
                let d = FlipFlopParams::default();
                (
                    TaskKind::NBitFlipFlop(FlipFlopParams {
                        p_switch: r.p_switch.unwrap_or(d.p_switch),
                    }),
                    &["p_switch"],
                )
            }
            "delayed_discrimination" => {
                let d = DelayedParams::default();
                (
                    TaskKind::DelayedDiscrimination(DelayedParams {
                        delay_min: r.delay_min.unwrap_or(d.delay_min),
                        delay_max: r.delay_max.unwrap_or(d.delay_max),
                        stim_min: r.stim_min.unwrap_or(d.stim_min),
                        stim_max: r.stim_max.unwrap_or(d.stim_max),
                        aux_magnitude: r.aux_magnitude.unwrap_or(d.aux_magnitude),
                    }),
                    &["delay_min", "delay_max", "stim_min", "stim_max", "aux_magnitude"],
                )
            }
            "sine_wave_generation" | "sine" => {
                let d = SineParams::default();
                (
                    TaskKind::SineWaveGeneration(SineParams {
                        freq_min: r.freq_min.unwrap_or(d.freq_min),
                        freq_max: r.freq_max.unwrap_or(d.freq_max),
                        n_freq: r.n_freq.unwrap_or(d.n_freq),
                        dt: r.dt.unwrap_or(d.dt),
                    }),
                    &["freq_min", "freq_max", "n_freq", "dt"],
                )
            }
            "path_integration" => {
                let d = PathParams::default();
                (
                    TaskKind::PathIntegration(PathParams {
                        dims: r.dims.unwrap_or(d.dims),
                        v_max: r.v_max.unwrap_or(d.v_max),
                        direction_std: r.direction_std.unwrap_or(d.direction_std),
                        speed_std: r.speed_std.unwrap_or(d.speed_std),
                        noise_std: r.noise_std.unwrap_or(d.noise_std),
                        mean_stop: r.mean_stop.unwrap_or(d.mean_stop),
                        mean_go: r.mean_go.unwrap_or(d.mean_go),
                        arena_size: r.arena_size.unwrap_or(d.arena_size),
                        start_cue: r.start_cue.unwrap_or(d.start_cue),
                    }),
                    &[
                        "dims",
                        "v_max",
                        "direction_std",
                        "speed_std",
                        "noise_std",
                        "mean_stop",
                        "mean_go",
                        "arena_size",
                        "start_cue",
                    ],
                )
            }
            other => return Err(format!("unknown task kind `{other}`")),
        };
        let foreign = r.foreign_keys(allowed);
        if !foreign.is_empty() {
            return Err(format!(
                "keys {foreign:?} do not apply to task kind `{}`",
                kind.name()
            ));
        }
        let trial_len = r.trial_len.unwrap_or_else(|| kind.default_trial_len());
        let spec = TaskSpec {
            kind,
            channels: r.channels.unwrap_or(1),
            trial_len,
            ood_mode: r.ood_mode.unwrap_or(OodMode::None),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

impl From<TaskSpec> for TaskSpecRepr {
    fn from(s: TaskSpec) -> Self {
        let mut r = TaskSpecRepr {
            kind: s.kind.name().to_string(),
            channels: Some(s.channels),
            trial_len: Some(s.trial_len),
            ood_mode: Some(s.ood_mode),
            ..Default::default()
        };
        match s.kind {
            TaskKind::NBitFlipFlop(p) => r.p_switch = Some(p.p_switch),
            TaskKind::DelayedDiscrimination(p) => {
                r.delay_min = Some(p.delay_min);
                r.delay_max = Some(p.delay_max);
                r.stim_min = Some(p.stim_min);
                r.stim_max = Some(p.stim_max);
                r.aux_magnitude = Some(p.aux_magnitude);
            }
            TaskKind::SineWaveGeneration(p) => {
                r.freq_min = Some(p.freq_min);
                r.freq_max = Some(p.freq_max);
                r.n_freq = Some(p.n_freq);
                r.dt = Some(p.dt);
            }
            TaskKind::PathIntegration(p) => {
                r.dims = Some(p.dims);
                r.v_max = Some(p.v_max);
                r.direction_std = Some(p.direction_std);
                r.speed_std = Some(p.speed_std);
                r.noise_std = Some(p.noise_std);
                r.mean_stop = Some(p.mean_stop);
                r.mean_go = Some(p.mean_go);
                r.arena_size = Some(p.arena_size);
                r.start_cue = Some(p.start_cue);
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ood_doubles_trial_length() {
        let ood = make_ood_variant(&TaskSpec::flip_flop()).unwrap();
        assert_eq!(ood.trial_len, 200);
        assert_eq!(ood.ood_mode, OodMode::DoubledTrialLength);
    }

    #[test]
    fn ood_doubles_delay_and_extends_trial() {
        let ood = make_ood_variant(&TaskSpec::delayed_discrimination()).unwrap();
        let TaskKind::DelayedDiscrimination(p) = &ood.kind else {
            panic!("kind changed")
        };
        assert_eq!((p.delay_min, p.delay_max), (10, 40));
        assert_eq!(ood.trial_len, 80);
        assert_eq!(ood.ood_mode, OodMode::DoubledDelay);
        ood.validate().unwrap();
        // Response window length is unchanged at the longest delay.
        let base = TaskSpec::delayed_discrimination();
        assert_eq!(ood.trial_len - 15 - 40, base.trial_len - 15 - 20);
    }

    #[test]
    fn ood_twice_is_rejected() {
        let ood = make_ood_variant(&TaskSpec::sine_wave()).unwrap();
        assert!(matches!(make_ood_variant(&ood), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn io_dims() {
        assert_eq!(TaskSpec::flip_flop().with_channels(3).input_dim(), 3);
        let mut dd = TaskSpec::delayed_discrimination().with_channels(2);
        assert_eq!(dd.output_dim(), 2);
        if let TaskKind::DelayedDiscrimination(p) = &mut dd.kind {
            p.aux_magnitude = true;
        }
        assert_eq!(dd.output_dim(), 4);
        assert_eq!(TaskSpec::path_integration(3).input_dim(), 3);
        assert_eq!(TaskSpec::path_integration(2).output_dim(), 2);
    }

    #[test]
    fn repr_rejects_foreign_keys() {
        let text = "kind = \"sine_wave_generation\"\np_switch = 0.2\n";
        let err = toml::from_str::<TaskSpec>(text).unwrap_err();
        assert!(err.to_string().contains("p_switch"));
    }

    #[test]
    fn repr_round_trip() {
        let spec = TaskSpec::path_integration(3).with_channels(2);
        let text = toml::to_string(&spec).unwrap();
        let back: TaskSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}

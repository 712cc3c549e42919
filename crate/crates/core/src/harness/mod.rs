//! Experiment orchestration: configuration, checkpoints, ensemble runs and
//! reports.

mod checkpoint;
mod config;
mod report;
mod run;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, Manifest, TensorEntry, MAGIC, VERSION};
pub use config::{parse_config, EnsembleConfig, EvalConfig, ExperimentConfig, Metric, NtkParams, SweepAxis, SweepParam, SweepPoint};
pub use report::{emit_probe_report, emit_report};
pub use run::{
    analyze, load_ensembles, probe_points, run_experiment, train_ensembles, BehaviorSummary, DistanceSummary, DsaSummary, Ensemble,
    FeatureSummary, MemberResult, PointResult, ProbeSummary, Provenance, ResultsBundle, RunOptions,
};

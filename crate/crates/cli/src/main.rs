use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use degenkit::harness::{
    analyze, emit_probe_report, emit_report, load_ensembles, parse_config, probe_points, run_experiment,
    train_ensembles, ExperimentConfig, Metric, ResultsBundle, RunOptions,
};
use degenkit::Error;

#[derive(Parser)]
#[command(name = "degenkit", version, about = "Train RNN ensembles and measure solution degeneracy")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the ensembles and write checkpoints.
    Train(RunArgs),
    /// Train and evaluate every sweep point, then write the report.
    Sweep(RunArgs),
    /// Evaluate metrics on checkpoints from an earlier train or sweep.
    Analyze {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint directory, if not OUT/checkpoints.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Estimate the memory demand of each sweep point's task.
    Probe(RunArgs),
    /// Print the headline numbers of a finished run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override ensemble.n_seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, env = "DEGENKIT_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Override the metric list.
    #[arg(long = "metric", num_args = 1.., value_parser = parse_metric)]
    metrics: Option<Vec<Metric>>,
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Config(String),
    Numeric(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } | Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            Error::NumericFailure { .. } => Failure::Numeric(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let text = std::fs::read_to_string(&self.config)
            .map_err(|e| Failure::Config(format!("{}: {e}", self.config.display())))?;
        let mut cfg = parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", self.config.display())))?;
        if let Some(k) = self.seeds {
            cfg.ensemble.n_seeds = k;
        }
        if let Some(m) = &self.metrics {
            cfg.set_metrics(m.iter().copied());
        }
        cfg.check()?;
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            jobs: self.jobs.max(1),
            checkpoint_dir: Some(self.out.join("checkpoints")),
        }
    }
}

/// Write the report, then turn member failures into exit code 3.
fn finish(bundle: &ResultsBundle, out: &Path) -> Result<(), Failure> {
    let files = emit_report(bundle, out)?;
    log::info!("wrote {} files to {}", files.len(), out.display());
    let failed: Vec<String> = bundle
        .points
        .iter()
        .flat_map(|p| p.members.iter().filter(|m| m.failure.is_some()).map(move |m| format!("{}/seed {}", p.label, m.seed)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("training diverged for {}", failed.join(", "))))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(args) => {
            let mut cfg = args.load()?;
            cfg.set_metrics([]);
            let ens = train_ensembles(&cfg, &args.options())?;
            finish(&analyze(&cfg, &ens, args.jobs)?, &args.out)
        }
        Command::Sweep(args) => {
            let cfg = args.load()?;
            finish(&run_experiment(&cfg, &args.options())?, &args.out)
        }
        Command::Analyze { run, checkpoints } => {
            let cfg = run.load()?;
            let dir = checkpoints.unwrap_or_else(|| run.out.join("checkpoints"));
            let ens = load_ensembles(&cfg, &dir)?;
            finish(&analyze(&cfg, &ens, run.jobs.max(1))?, &run.out)
        }
        Command::Probe(args) => {
            let cfg = args.load()?;
            let results = probe_points(&cfg, args.jobs.max(1))?;
            for (pt, d) in &results {
                println!("{}\th* = {}", pt.label, d.h_star);
            }
            emit_probe_report(&cfg, &results, &args.out)?;
            Ok(())
        }
        Command::Report { out } => print_report(&out),
    }
}

fn fmt(v: &serde_json::Value) -> String {
    if v.is_u64() {
        return v.to_string();
    }
    v.as_f64().map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn print_report(out: &Path) -> Result<(), Failure> {
    let path = out.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    let doc: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
    println!("config {}", doc["provenance"]["config_hash"].as_str().unwrap_or("?"));
    if doc["partial"].as_bool() == Some(true) {
        println!("partial: some members failed");
    }
    println!("point\tconverged\tdsa\tpif\tsvcca\tsigma_ood\tweight_change\tkernel_align\th*");
    for p in doc["points"].as_array().into_iter().flatten() {
        let members = p["members"].as_array().map(Vec::len).unwrap_or(0);
        let conv = p["members"]
            .as_array()
            .map(|m| m.iter().filter(|m| m["converged"].as_bool() == Some(true)).count())
            .unwrap_or(0);
        println!(
            "{}\t{conv}/{members}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            p["label"].as_str().unwrap_or("?"),
            fmt(&p["dsa"]["mean"]),
            fmt(&p["pif"]["mean"]),
            fmt(&p["svcca"]["mean"]),
            fmt(&p["behavior"]["sigma_ood"]),
            fmt(&p["feature_learning"]["weight_change"]),
            fmt(&p["feature_learning"]["kernel_alignment"]),
            fmt(&p["probe"]["h_star"]),
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(m) => (2, m),
                Failure::Numeric(m) => (3, m),
                Failure::Other(m) => (1, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

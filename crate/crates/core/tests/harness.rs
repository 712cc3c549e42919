//! End-to-end runs of the experiment harness on tiny ensembles.

use std::fs;
use std::path::Path;

use degenkit::harness::{analyze, emit_report, load_ensembles, parse_config, run_experiment, RunOptions};

const TINY: &str = r#"
metrics = ["dsa", "pif", "svcca", "behavior", "feature_learning", "mds"]

[task]
kind = "nbit_flip_flop"
trial_len = 20

[model]
width = 6

[train]
max_epochs = 3
steps_per_epoch = 4
batch_size = 8
early_stop_threshold = 10.0
early_stop_patience = 1

[ensemble]
n_seeds = 3
base_seed = 11

[sweep]
parameter = "task.channels"
values = [1, 2]

[dsa]
lag_max = 3
procrustes_restarts = 2

[eval]
batch = 6
ood_batch = 8
ntk_trials = 2
"#;

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().skip(1).map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn sweep_is_deterministic_and_reports_are_consistent() {
    let cfg = parse_config(TINY).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let opts = |d: &Path| RunOptions {
        jobs: 2,
        checkpoint_dir: Some(d.join("checkpoints")),
    };
    let bundle = run_experiment(&cfg, &opts(a.path())).unwrap();
    emit_report(&bundle, a.path()).unwrap();
    let serial = RunOptions { jobs: 1, ..opts(b.path()) };
    emit_report(&run_experiment(&cfg, &serial).unwrap(), b.path()).unwrap();
    let sa = fs::read(a.path().join("summary.json")).unwrap();
    assert_eq!(sa, fs::read(b.path().join("summary.json")).unwrap());

    for label in ["1", "2"] {
        for metric in ["dsa", "pif", "svcca"] {
            let m = read_matrix(&a.path().join(format!("D_{metric}_{label}.csv")));
            assert_eq!(m.len(), 3);
            for i in 0..3 {
                assert_eq!(m[i][i], 0.0);
                for j in 0..3 {
                    assert_eq!(m[i][j], m[j][i]);
                }
            }
        }
        assert!(a.path().join(format!("mds_{label}.csv")).exists());
    }
    assert!(a.path().join("loss_curves.csv").exists());

    // sigma_ood in the summary is the population std of the converged rows.
    let summary: serde_json::Value = serde_json::from_slice(&sa).unwrap();
    let mut r = csv::Reader::from_path(a.path().join("ood_losses.csv")).unwrap();
    let rows: Vec<(String, bool, f64)> = r
        .records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[2].parse().unwrap(), rec[3].parse().unwrap())
        })
        .collect();
    for (p, point) in summary["points"].as_array().unwrap().iter().enumerate() {
        let label = point["label"].as_str().unwrap();
        let losses: Vec<f64> = rows.iter().filter(|r| r.0 == label && r.1).map(|r| r.2).collect();
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        let sigma = (losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / losses.len() as f64).sqrt();
        let reported = point["behavior"]["sigma_ood"].as_f64().unwrap();
        assert!((sigma - reported).abs() <= 1e-12, "point {p}: {sigma} vs {reported}");
        let dsa = point["dsa"]["mean_all"].as_f64().unwrap();
        assert!(dsa.is_finite() && dsa >= 0.0);
    }

    // Analysis from checkpoints reproduces the in-memory run.
    let loaded = load_ensembles(&cfg, &a.path().join("checkpoints")).unwrap();
    let again = analyze(&cfg, &loaded, 1).unwrap();
    assert_eq!(again, bundle);
}

#[test]
fn empty_metric_set_writes_only_summary() {
    let text = TINY.replace(
        "metrics = [\"dsa\", \"pif\", \"svcca\", \"behavior\", \"feature_learning\", \"mds\"]",
        "",
    );
    let cfg = parse_config(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let bundle = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let written = emit_report(&bundle, dir.path()).unwrap();
    assert_eq!(written, vec![dir.path().join("summary.json")]);
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn two_seeds_give_one_pif_value() {
    let text = TINY
        .replace("n_seeds = 3", "n_seeds = 2")
        .replace("[\"dsa\", \"pif\", \"svcca\", \"behavior\", \"feature_learning\", \"mds\"]", "[\"pif\"]");
    let mut cfg = parse_config(&text).unwrap();
    cfg.sweep = None;
    let bundle = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let pt = &bundle.points[0];
    let d = &pt.distances[0];
    assert_eq!(d.len(), 2);
    assert_eq!(pt.pif.as_ref().unwrap().mean_all, d.get(0, 1));
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let cfg = parse_config(&TINY.replace("values = [1, 2]", "values = [1]")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        jobs: 1,
        checkpoint_dir: Some(dir.path().to_path_buf()),
    };
    run_experiment(&cfg, &opts).unwrap();
    let other = parse_config(&TINY.replace("values = [1, 2]", "values = [1]").replace("width = 6", "width = 7")).unwrap();
    assert!(load_ensembles(&other, dir.path()).is_err());
}

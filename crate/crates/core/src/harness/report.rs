//! Writing a results bundle to disk.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, SweepPoint};
use super::run::ResultsBundle;
use crate::probes::MemoryDemand;

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_probe_curve(path: &Path, demand: &MemoryDemand) -> Result<()> {
    let rows: Vec<Vec<String>> = demand.curve.iter().map(|(h, m)| vec![h.to_string(), m.to_string()]).collect();
    write_csv(path, &["h".into(), "mse".into()], &rows)
}

/// Write `probe.json` and one `probe_<sweepvalue>.csv` per point.
pub fn emit_probe_report(cfg: &ExperimentConfig, results: &[(SweepPoint, MemoryDemand)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let points: Vec<serde_json::Value> = results
        .iter()
        .map(|(pt, d)| serde_json::json!({ "label": pt.label, "value": pt.value, "h_star": d.h_star }))
        .collect();
    let doc = serde_json::json!({ "config_hash": cfg.hash(), "probe": cfg.probe, "points": points });
    let mut json = serde_json::to_vec_pretty(&doc).map_err(|e| Error::invalid(format!("probe: {e}")))?;
    json.push(b'\n');
    let path = out_dir.join("probe.json");
    fs::write(&path, json)?;
    let mut written = vec![path];
    for (pt, d) in results {
        let path = out_dir.join(format!("probe_{}.csv", pt.label));
        write_probe_curve(&path, d)?;
        written.push(path);
    }
    Ok(written)
}

/// Write `summary.json` and the CSV tables. Returns the paths written.
///
/// Floats are printed in shortest round-trip form, so re-reading a CSV gives
/// the exact values behind the summary.
pub fn emit_report(bundle: &ResultsBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let mut json = serde_json::to_vec_pretty(bundle).map_err(|e| Error::invalid(format!("summary: {e}")))?;
    json.push(b'\n');
    let summary = out_dir.join("summary.json");
    fs::write(&summary, json)?;
    written.push(summary);

    if bundle.config.metrics.is_empty() {
        return Ok(written);
    }

    for pt in &bundle.points {
        let seeds: Vec<String> = pt.members.iter().map(|m| m.seed.to_string()).collect();
        for d in &pt.distances {
            let path = out_dir.join(format!("D_{}_{}.csv", d.metric.name(), pt.label));
            let header: Vec<String> = std::iter::once("seed".to_string()).chain(seeds.iter().cloned()).collect();
            let rows: Vec<Vec<String>> = (0..d.len())
                .map(|i| {
                    std::iter::once(seeds[i].clone())
                        .chain((0..d.len()).map(|j| d.get(i, j).to_string()))
                        .collect()
                })
                .collect();
            write_csv(&path, &header, &rows)?;
            written.push(path);
        }
        if let Some(coords) = &pt.mds {
            let path = out_dir.join(format!("mds_{}.csv", pt.label));
            let header: Vec<String> = ["seed", "converged", "x", "y"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = pt
                .members
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    vec![
                        m.seed.to_string(),
                        m.converged.to_string(),
                        coords[(i, 0)].to_string(),
                        coords[(i, 1)].to_string(),
                    ]
                })
                .collect();
            write_csv(&path, &header, &rows)?;
            written.push(path);
        }
        if let Some(demand) = &pt.probe_curve {
            let path = out_dir.join(format!("probe_{}.csv", pt.label));
            write_probe_curve(&path, demand)?;
            written.push(path);
        }
    }

    let path = out_dir.join("loss_curves.csv");
    let rows: Vec<Vec<String>> = bundle
        .points
        .iter()
        .flat_map(|pt| {
            pt.members.iter().flat_map(move |m| {
                m.loss_curve
                    .iter()
                    .enumerate()
                    .map(move |(e, l)| vec![pt.label.clone(), m.seed.to_string(), e.to_string(), l.to_string()])
            })
        })
        .collect();
    write_csv(&path, &["point", "seed", "epoch", "loss"].map(String::from), &rows)?;
    written.push(path);

    if bundle.points.iter().any(|p| p.behavior.is_some()) {
        let path = out_dir.join("ood_losses.csv");
        let rows: Vec<Vec<String>> = bundle
            .points
            .iter()
            .flat_map(|pt| {
                pt.members
                    .iter()
                    .map(move |m| vec![pt.label.clone(), m.seed.to_string(), m.converged.to_string(), opt(m.ood_loss)])
            })
            .collect();
        write_csv(&path, &["point", "seed", "converged", "ood_loss"].map(String::from), &rows)?;
        written.push(path);
    }
    Ok(written)
}

//! CSV reports. Floats are written with 9 significant digits.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::heads::HeadKind;
use crate::scores::ScoreKind;

use super::{RunRecord, RECORD_FILE};

pub const METRICS_HEADER: [&str; 11] = [
    "run_id",
    "head",
    "entropic_scale",
    "score",
    "in_data",
    "out_data",
    "test_accuracy",
    "mean_entropy",
    "tnr_at_tpr95",
    "auroc",
    "dtacc",
];

pub const CURVES_HEADER: [&str; 7] = [
    "run_id",
    "epoch",
    "train_loss",
    "train_acc",
    "test_acc",
    "train_entropy",
    "inference_entropy",
];

pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn scale_field(es: Option<f64>) -> String {
    es.map(fmt_sig9).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn non_empty(records: &[RunRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Validation("no run records to report".into()));
    }
    Ok(())
}

/// One row per record × OOD set × score.
pub fn write_metrics_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    non_empty(records)?;
    let mut w = writer(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in records {
        for eval in &r.evaluations {
            for ood in &eval.reports {
                w.write_record([
                    r.run_id.clone(),
                    r.head.name().to_string(),
                    scale_field(r.entropic_scale),
                    eval.score.name().to_string(),
                    r.in_data.clone(),
                    ood.out_data.clone(),
                    fmt_sig9(eval.test_accuracy),
                    fmt_sig9(eval.mean_entropy),
                    fmt_sig9(ood.report.tnr_at_tpr95),
                    fmt_sig9(ood.report.auroc),
                    fmt_sig9(ood.report.dtacc),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per record × epoch.
pub fn write_curves_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    non_empty(records)?;
    let mut w = writer(path)?;
    w.write_record(CURVES_HEADER)?;
    for r in records {
        for e in &r.fit.epochs {
            w.write_record([
                r.run_id.clone(),
                e.epoch.to_string(),
                fmt_sig9(e.train_loss),
                fmt_sig9(e.train_acc),
                fmt_sig9(e.test_acc),
                fmt_sig9(e.train_entropy),
                fmt_sig9(e.inference_entropy),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv` and `curves.csv` into `dir`.
pub fn write_report(records: &[RunRecord], dir: &Path) -> Result<()> {
    non_empty(records)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    write_metrics_csv(records, &dir.join("metrics.csv"))?;
    write_curves_csv(records, &dir.join("curves.csv"))
}

/// One row per model: the SoftMax baseline scored with MPS, IsoMax runs with
/// the entropic score, detection metrics as `<ood>_<metric>` columns.
pub fn write_sweep_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    non_empty(records)?;
    let ood_names: Vec<String> = records[0]
        .evaluations
        .first()
        .map(|e| e.reports.iter().map(|r| r.out_data.clone()).collect())
        .unwrap_or_default();
    let mut header: Vec<String> = [
        "run_id",
        "head",
        "entropic_scale",
        "score",
        "test_accuracy",
        "mean_entropy",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for name in &ood_names {
        for m in ["tnr_at_tpr95", "auroc", "dtacc"] {
            header.push(format!("{name}_{m}"));
        }
    }
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for r in records {
        let score = match r.head {
            HeadKind::SoftMax => ScoreKind::Mps,
            HeadKind::IsoMax => ScoreKind::Entropic,
        };
        let eval = r.evaluation(score).ok_or_else(|| {
            Error::Validation(format!("{} has no {} evaluation", r.run_id, score.name()))
        })?;
        let mut row = vec![
            r.run_id.clone(),
            r.head.name().to_string(),
            scale_field(r.entropic_scale),
            score.name().to_string(),
            fmt_sig9(eval.test_accuracy),
            fmt_sig9(eval.mean_entropy),
        ];
        for name in &ood_names {
            let rep = eval
                .reports
                .iter()
                .find(|o| &o.out_data == name)
                .ok_or_else(|| Error::Consistency(format!("{} lacks OOD set {name}", r.run_id)))?;
            row.push(fmt_sig9(rep.report.tnr_at_tpr95));
            row.push(fmt_sig9(rep.report.auroc));
            row.push(fmt_sig9(rep.report.dtacc));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Collects `record.json` from `dir` and its immediate subdirectories, in
/// path order.
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = Vec::new();
    let own = dir.join(RECORD_FILE);
    if own.is_file() {
        paths.push(own);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::file(dir, e))?;
        let candidate = entry.path().join(RECORD_FILE);
        if candidate.is_file() {
            paths.push(candidate);
        }
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::file(p, e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}

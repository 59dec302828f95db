//! CSV and JSON outputs plus the run manifest.
//!
//! Reals are written with 17 significant digits so that parsing a CSV back
//! reproduces the in-memory values bit for bit. Missing values are empty
//! fields; non-finite values are `inf`, `-inf` or `NaN`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{AssumptionAudit, BoundReport, PerturbReport};
use crate::error::{Error, Result};
use crate::experiments::{Estimator, ExperimentResult, ResultRow};
use crate::risk::RiskReport;
use crate::solver::{Dataset, FitResult};

pub const RESULTS_CSV: &str = "results.csv";
pub const REPORT_JSON: &str = "report.json";
pub const MANIFEST_JSON: &str = "manifest.json";

/// Column order of experiment CSVs.
pub const EXPERIMENT_COLUMNS: [&str; 9] = [
    "n",
    "p",
    "lambda",
    "estimator",
    "mse",
    "mse_se",
    "bound_over_n",
    "mean",
    "mean_se",
];

pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

pub fn parse_real(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Config(format!("not a number: `{s}`")))
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() { Ok(None) } else { parse_real(s).map(Some) }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let ioe = |e: csv::Error| Error::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(ioe)?;
    for r in rows {
        w.write_record(&r).map_err(ioe)?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: "<csv>".into(),
        message: e.to_string(),
    })
}

pub fn experiment_csv(result: &ExperimentResult) -> Result<Vec<u8>> {
    let rows = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                r.p.to_string(),
                fmt_real(r.lambda),
                r.estimator.label(),
                fmt_real(r.mse),
                fmt_opt(r.mse_se),
                fmt_opt(r.bound_over_n),
                fmt_real(r.mean),
                fmt_opt(r.mean_se),
            ]
        })
        .collect();
    csv_bytes(&EXPERIMENT_COLUMNS, rows)
}

/// Inverse of [`experiment_csv`].
pub fn parse_experiment_csv(bytes: &[u8]) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let bad = |e: csv::Error| Error::Config(format!("results csv: {e}"));
    let header: Vec<String> = rdr.headers().map_err(bad)?.iter().map(String::from).collect();
    if header != EXPERIMENT_COLUMNS {
        return Err(Error::Config(format!("unexpected results header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Config(format!("not a count: `{s}`")))
        };
        out.push(ResultRow {
            n: int(&rec[0])?,
            p: int(&rec[1])?,
            lambda: parse_real(&rec[2])?,
            estimator: Estimator::parse(&rec[3])
                .ok_or_else(|| Error::Config(format!("unknown estimator `{}`", &rec[3])))?,
            mse: parse_real(&rec[4])?,
            mse_se: parse_opt(&rec[5])?,
            bound_over_n: parse_opt(&rec[6])?,
            mean: parse_real(&rec[7])?,
            mean_se: parse_opt(&rec[8])?,
        });
    }
    Ok(out)
}

pub fn risk_csv(report: &RiskReport) -> Result<Vec<u8>> {
    let method = serde_json::to_value(report.method)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default();
    let rows = report
        .per_sample
        .iter()
        .enumerate()
        .map(|(i, v)| {
            vec![
                method.clone(),
                i.to_string(),
                fmt_real(*v),
                fmt_opt(report.h_diag.as_ref().map(|h| h[i])),
                report.flagged.contains(&i).to_string(),
            ]
        })
        .collect();
    csv_bytes(&["method", "i", "per_sample", "h_diag", "flagged"], rows)
}

pub fn fit_csv(fit: &FitResult) -> Result<Vec<u8>> {
    let rows = fit
        .beta_hat
        .iter()
        .enumerate()
        .map(|(j, b)| vec![j.to_string(), fmt_real(*b)])
        .collect();
    csv_bytes(&["j", "beta_hat"], rows)
}

pub fn bound_csv(b: &BoundReport) -> Result<Vec<u8>> {
    let row = vec![
        fmt_real(b.rho),
        fmt_real(b.delta),
        fmt_real(b.c0),
        fmt_real(b.c1),
        fmt_real(b.nu),
        fmt_real(b.c_b),
        fmt_real(b.c_v),
        b.n.map(|n| n.to_string()).unwrap_or_default(),
        fmt_opt(b.bound_over_n),
        fmt_opt(b.published_c_v),
    ];
    csv_bytes(
        &["rho", "delta", "c0", "c1", "nu", "c_b", "c_v", "n", "bound_over_n", "published_c_v"],
        vec![row],
    )
}

/// A dataset as CSV: a `y` column plus one column per feature.
pub fn dataset_csv(data: &Dataset) -> Result<Vec<u8>> {
    let mut header = vec!["y".to_string()];
    header.extend((0..data.p()).map(|j| format!("x{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..data.n())
        .map(|i| {
            std::iter::once(fmt_real(data.y[i]))
                .chain(data.x.row(i).iter().map(|v| fmt_real(*v)))
                .collect()
        })
        .collect();
    csv_bytes(&header, rows)
}

/// Reads a dataset written by [`dataset_csv`]; the response is the column
/// named `y` and every other column is a feature, in file order.
pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let bad = |e: csv::Error| io_err(path, e);
    let header: Vec<String> = rdr.headers().map_err(bad)?.iter().map(String::from).collect();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::Config(format!("{}: no `y` column", path.display())))?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(bad)?;
        let mut row = Vec::with_capacity(header.len() - 1);
        for (j, field) in rec.iter().enumerate() {
            let v = parse_real(field.trim())
                .map_err(|e| Error::Config(format!("{} row {}: {e}", path.display(), line + 2)))?;
            if j == y_col {
                y.push(v);
            } else {
                row.push(v);
            }
        }
        rows.push(row);
    }
    Dataset::from_rows(&rows, &y)
}

/// Assumption audit together with the perturbation check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRun {
    pub audit: AssumptionAudit,
    pub perturb: PerturbReport,
}

pub fn audit_csv(a: &AuditRun) -> Result<Vec<u8>> {
    let rows = a
        .perturb
        .entries
        .iter()
        .map(|e| {
            vec![
                e.i.to_string(),
                fmt_real(e.lhs),
                fmt_real(e.rhs),
                e.holds.to_string(),
            ]
        })
        .collect();
    csv_bytes(&["i", "lhs", "rhs", "holds"], rows)
}

/// Anything the CLI can persist.
pub enum Output<'a> {
    Experiment(&'a ExperimentResult),
    Risk(&'a RiskReport),
    Fit(&'a FitResult),
    Bound(&'a BoundReport),
    Audit(&'a AuditRun),
}

impl Output<'_> {
    pub fn csv(&self) -> Result<Vec<u8>> {
        match self {
            Output::Experiment(r) => experiment_csv(r),
            Output::Risk(r) => risk_csv(r),
            Output::Fit(r) => fit_csv(r),
            Output::Bound(r) => bound_csv(r),
            Output::Audit(r) => audit_csv(r),
        }
    }

    pub fn json(&self) -> Result<Vec<u8>> {
        let v = match self {
            Output::Experiment(r) => serde_json::to_vec_pretty(r),
            Output::Risk(r) => serde_json::to_vec_pretty(r),
            Output::Fit(r) => serde_json::to_vec_pretty(r),
            Output::Bound(r) => serde_json::to_vec_pretty(r),
            Output::Audit(r) => serde_json::to_vec_pretty(r),
        };
        v.map_err(|e| Error::Io {
            path: REPORT_JSON.into(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    pub outputs: Vec<OutputFile>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Provenance recorded in the manifest.
#[derive(Debug, Clone)]
pub struct RunInfo {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub started: f64,
}

/// Writes `results.csv` and `report.json`, then `manifest.json`.
pub fn write_results(output: &Output<'_>, out_dir: &Path, info: &RunInfo) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let files = [(RESULTS_CSV, output.csv()?), (REPORT_JSON, output.json()?)];
    let mut paths = Vec::new();
    let mut outputs = Vec::new();
    for (name, bytes) in &files {
        let path = out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        outputs.push(OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        paths.push(path);
    }
    let manifest = RunManifest {
        command: info.command.clone(),
        config_path: info.config_path.clone(),
        seed: info.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started: info.started,
        finished: unix_now(),
        outputs,
    };
    let path = out_dir.join(MANIFEST_JSON);
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    paths.push(path);
    Ok(paths)
}

/// Re-hashes every file listed in the manifest.
pub fn verify_manifest(out_dir: &Path) -> Result<bool> {
    let path = out_dir.join(MANIFEST_JSON);
    let text = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let m: RunManifest = serde_json::from_slice(&text).map_err(|e| io_err(&path, e))?;
    for f in &m.outputs {
        let p = out_dir.join(&f.file);
        let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
        if sha256_hex(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
            return Ok(false);
        }
    }
    Ok(true)
}

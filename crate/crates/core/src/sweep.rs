//! Experiment drivers: the wSLNR exponent sweep, fixed reference baselines,
//! the fairness-target sweep of the trained network, and CSV report files.
//!
//! Every report starts with one `# {json}` metadata line followed by a CSV
//! header. Numbers use Rust's shortest round-trip formatting, so identical
//! inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{Baseline, Method};
use crate::channel::Dataset;
use crate::error::{Error, Result};
use crate::metrics::ecdf;
use crate::trainer::{evaluate, train, EvalSummary, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Failed(String),
}

/// One (method, knob) result: `knob` is alpha for wSLNR, the fairness target
/// for the network and absent for the fixed baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub method: String,
    pub knob: Option<f64>,
    pub mean_sum_rate: f64,
    pub mean_jain: f64,
    pub lambda_final: Option<f64>,
    pub status: PointStatus,
}

impl OperatingPoint {
    fn failed(method: &str, knob: Option<f64>, reason: String) -> Self {
        OperatingPoint {
            method: method.into(),
            knob,
            mean_sum_rate: f64::NAN,
            mean_jain: f64::NAN,
            lambda_final: None,
            status: PointStatus::Failed(reason),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == PointStatus::Ok
    }
}

/// A point plus the raw evaluation behind it (absent for failed points).
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub point: OperatingPoint,
    pub summary: Option<EvalSummary>,
}

fn entry_from(method: &str, knob: Option<f64>, lambda: Option<f64>, res: Result<EvalSummary>) -> SweepEntry {
    match res {
        Ok(s) => SweepEntry {
            point: OperatingPoint {
                method: method.into(),
                knob,
                mean_sum_rate: s.mean_sum_rate,
                mean_jain: s.mean_jain,
                lambda_final: lambda,
                status: PointStatus::Ok,
            },
            summary: Some(s),
        },
        Err(e) => SweepEntry { point: OperatingPoint::failed(method, knob, e.to_string()), summary: None },
    }
}

/// Evaluates wSLNR at every alpha on `test`.
pub fn baseline_sweep(alphas: &[f64], test: &Dataset) -> Result<Vec<SweepEntry>> {
    if alphas.is_empty() {
        return Err(Error::InvalidInput("alpha list is empty".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0)) {
        return Err(Error::InvalidInput(format!("alpha must be nonnegative, got {a}")));
    }
    alphas
        .iter()
        .map(|&a| evaluate(&Baseline::wslnr(a), test).map(|s| entry_from("wslnr", Some(a), None, Ok(s))))
        .collect()
}

/// MRT, ZF and conventional SLNR on `test`. A method whose preconditions
/// fail (ZF with more users than antennas) yields a failed point.
pub fn reference_points(test: &Dataset) -> Vec<SweepEntry> {
    [Method::Mrt, Method::Zf, Method::Slnr]
        .into_iter()
        .map(|m| entry_from(m.name(), None, None, evaluate(&Baseline::new(m), test)))
        .collect()
}

/// One trained network of a fairness-target sweep.
#[derive(Debug, Clone)]
pub struct DnnRun {
    pub entry: SweepEntry,
    pub config: TrainConfig,
    pub outcome: Option<TrainOutcome>,
}

/// Training configuration of sweep point `index`: the fairness target is
/// replaced and both seeds are offset by `index`.
pub fn point_config(base: &TrainConfig, j_lb: f64, index: usize) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.j_lb = j_lb;
    cfg.seed = base.seed.wrapping_add(index as u64);
    cfg.model.init_seed = base.model.init_seed.wrapping_add(index as u64);
    cfg
}

/// Trains an independent model per fairness target and evaluates it on
/// `test`. Runs that fail are recorded as failed points.
pub fn pareto_sweep(
    j_lbs: &[f64],
    train_set: &Dataset,
    val_set: &Dataset,
    test: &Dataset,
    base: &TrainConfig,
) -> Result<Vec<DnnRun>> {
    if j_lbs.is_empty() {
        return Err(Error::InvalidInput("fairness target list is empty".into()));
    }
    Ok(j_lbs
        .par_iter()
        .enumerate()
        .map(|(i, &j)| {
            let cfg = point_config(base, j, i);
            match train(&cfg, train_set, val_set) {
                Ok(out) => {
                    let entry = entry_from("dnn", Some(j), Some(out.dual.lambda), evaluate(&out.model, test));
                    DnnRun { entry, config: cfg, outcome: Some(out) }
                }
                Err(e) => {
                    log::error!("training for j_lb = {j} failed: {e}");
                    DnnRun {
                        entry: SweepEntry { point: OperatingPoint::failed("dnn", Some(j), e.to_string()), summary: None },
                        config: cfg,
                        outcome: None,
                    }
                }
            }
        })
        .collect())
}

/// One row of the paired comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub alpha: Option<f64>,
    pub wslnr_mean_sr: Option<f64>,
    pub j_lb: Option<f64>,
    pub j_dnn: Option<f64>,
    pub lambda: Option<f64>,
    pub dnn_mean_sr: Option<f64>,
}

/// Pairs the i-th wSLNR point with the i-th network point (pairs are chosen
/// by the caller). Missing partners leave blank cells.
pub fn pair_table(wslnr: &[OperatingPoint], dnn: &[OperatingPoint]) -> Vec<TableRow> {
    let ok = |v: f64, p: &OperatingPoint| p.is_ok().then_some(v);
    (0..wslnr.len().max(dnn.len()))
        .map(|i| {
            let w = wslnr.get(i);
            let d = dnn.get(i);
            TableRow {
                alpha: w.and_then(|p| p.knob),
                wslnr_mean_sr: w.and_then(|p| ok(p.mean_sum_rate, p)),
                j_lb: d.and_then(|p| p.knob),
                j_dnn: d.and_then(|p| ok(p.mean_jain, p)),
                lambda: d.and_then(|p| p.lambda_final),
                dnn_mean_sr: d.and_then(|p| ok(p.mean_sum_rate, p)),
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn knob_cell(p: &OperatingPoint) -> String {
    cell(p.knob)
}

/// Names of the files written by [`emit_reports`].
pub const REPORT_FILES: [&str; 6] =
    ["scatter.csv", "ecdf_user.csv", "ecdf_sum.csv", "bars_user.csv", "bars_sum.csv", "table2.csv"];

/// Writes the report CSVs into `out_dir` (created if needed) and returns
/// their paths. `meta` is embedded as the first line of every file.
pub fn emit_reports(
    entries: &[SweepEntry],
    table: &[TableRow],
    out_dir: &Path,
    meta: &serde_json::Value,
) -> Result<Vec<PathBuf>> {
    if entries.is_empty() {
        return Err(Error::InvalidInput("no operating points to report".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let head = format!("# {}\n", serde_json::to_string(meta)?);
    let ok: Vec<(&OperatingPoint, &EvalSummary)> = entries
        .iter()
        .filter_map(|e| e.summary.as_ref().map(|s| (&e.point, s)))
        .collect();

    let mut scatter = head.clone() + "jain,sum_rate,method,knob,lambda,status\n";
    for e in entries {
        let p = &e.point;
        let status = match &p.status {
            PointStatus::Ok => "ok".to_string(),
            PointStatus::Failed(r) => format!("failed: {}", r.replace([',', '\n'], ";")),
        };
        let _ = writeln!(
            scatter,
            "{},{},{},{},{},{}",
            if p.is_ok() { p.mean_jain.to_string() } else { String::new() },
            if p.is_ok() { p.mean_sum_rate.to_string() } else { String::new() },
            p.method,
            knob_cell(p),
            cell(p.lambda_final),
            status
        );
    }

    let mut ecdf_user = head.clone() + "method,knob,rate,cum_prob\n";
    let mut ecdf_sum = head.clone() + "method,knob,sum_rate,cum_prob\n";
    let mut bars_user = head.clone() + "method,knob,rank,mean_rate\n";
    let mut bars_sum = head.clone() + "method,knob,mean_sum_rate\n";
    for (p, s) in &ok {
        let pooled: Vec<f64> = s.user_rates.iter().flatten().copied().collect();
        for (v, c) in ecdf(&pooled)? {
            let _ = writeln!(ecdf_user, "{},{},{v},{c}", p.method, knob_cell(p));
        }
        for (v, c) in ecdf(&s.stream_sum_rate)? {
            let _ = writeln!(ecdf_sum, "{},{},{v},{c}", p.method, knob_cell(p));
        }
        for (rank, r) in ranked_user_means(s).iter().enumerate() {
            let _ = writeln!(bars_user, "{},{},{rank},{r}", p.method, knob_cell(p));
        }
        let _ = writeln!(bars_sum, "{},{},{}", p.method, knob_cell(p), s.mean_sum_rate);
    }

    let mut t2 = head + "alpha,wslnr_mean_sr,j_lb,j_dnn,lambda,dnn_mean_sr\n";
    for r in table {
        let _ = writeln!(
            t2,
            "{},{},{},{},{},{}",
            cell(r.alpha),
            cell(r.wslnr_mean_sr),
            cell(r.j_lb),
            cell(r.j_dnn),
            cell(r.lambda),
            cell(r.dnn_mean_sr)
        );
    }

    let bodies = [scatter, ecdf_user, ecdf_sum, bars_user, bars_sum, t2];
    let mut written = Vec::new();
    for (name, body) in REPORT_FILES.iter().zip(bodies) {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Mean rate of the k-th weakest user, k = 0..n_u, where users are ranked
/// by rate within each sample.
pub fn ranked_user_means(s: &EvalSummary) -> Vec<f64> {
    let n_u = s.user_rates.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; n_u];
    for rates in &s.user_rates {
        let mut r = rates.clone();
        r.sort_by(f64::total_cmp);
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = s.user_rates.len().max(1) as f64;
    acc.iter().map(|a| a / n).collect()
}

/// Fully resolved inputs and outputs of one command, written as JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub crate_version: String,
    pub config: serde_json::Value,
    /// File name to hex SHA-256 of its `.fbd` encoding.
    pub dataset_hashes: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        RunManifest {
            command: command.into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config,
            ..Default::default()
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("bad manifest: {e}")))
    }
}

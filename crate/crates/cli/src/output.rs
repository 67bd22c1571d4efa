//! CSV tables and run manifests.

use std::path::{Path, PathBuf};

use lds_core::pomdp::N_ACTIONS;
use lds_core::sim::{MetricsSummary, RolloutResult};
use lds_core::solver::{PolicyMapCell, SolverMeta};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const NA: &str = "NA";

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| NA.to_string(), |v| v.to_string())
}

/// Identity of the thing being evaluated.
#[derive(Debug, Clone, Default)]
pub struct RowLabel {
    pub policy_id: String,
    pub scenario: String,
    pub lambda: Option<f64>,
    pub t_biotic: Option<f64>,
    pub t_abiotic: Option<f64>,
    pub v_acc: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub label: RowLabel,
    pub metrics: Option<MetricsSummary>,
    /// Sweep columns: `(pareto, status)`.
    pub sweep: Option<(bool, String)>,
}

const LABEL_COLUMNS: [&str; 7] = ["policy_id", "scenario", "lambda", "t_biotic", "t_abiotic", "v_acc", "seed"];
const METRIC_COLUMNS: [&str; 16] = [
    "rollouts",
    "horizon",
    "declarations",
    "biotic_events",
    "abiotic_events",
    "false_negatives",
    "false_positives",
    "fnr",
    "fpr",
    "tpr",
    "tnr",
    "fnr_stderr",
    "fpr_stderr",
    "mean_instruments",
    "mean_return",
    "return_stderr",
];

fn header(sweep: bool) -> Vec<String> {
    let mut h: Vec<String> = LABEL_COLUMNS.iter().chain(&METRIC_COLUMNS).map(|s| s.to_string()).collect();
    h.extend((1..=N_ACTIONS).map(|a| format!("count_a{a}")));
    if sweep {
        h.push("pareto".into());
        h.push("status".into());
    }
    h
}

fn record(row: &MetricsRow) -> Vec<String> {
    let l = &row.label;
    let mut r = vec![
        l.policy_id.clone(),
        l.scenario.clone(),
        opt(l.lambda),
        opt(l.t_biotic),
        opt(l.t_abiotic),
        l.v_acc.to_string(),
        l.seed.to_string(),
    ];
    match &row.metrics {
        Some(m) => {
            r.extend([
                m.rollouts.to_string(),
                m.horizon.to_string(),
                m.declarations.to_string(),
                m.biotic_events.to_string(),
                m.abiotic_events.to_string(),
                m.false_negatives.to_string(),
                m.false_positives.to_string(),
                opt(m.fnr),
                opt(m.fpr),
                opt(m.tpr),
                opt(m.tnr),
                opt(m.fnr_stderr),
                opt(m.fpr_stderr),
                opt(m.mean_instruments_per_declaration),
                m.mean_return.to_string(),
                m.return_stderr.to_string(),
            ]);
            r.extend(m.action_counts.iter().map(u64::to_string));
        }
        None => r.extend(std::iter::repeat_n(NA.to_string(), METRIC_COLUMNS.len() + N_ACTIONS)),
    }
    if let Some((pareto, status)) = &row.sweep {
        r.push(pareto.to_string());
        r.push(status.clone());
    }
    r
}

fn write_table(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow], sweep: bool) -> Result<(), CliError> {
    write_table(path, header(sweep), rows.iter().map(record))
}

/// One line per declaration, rollout-major.
pub fn write_events(path: &Path, rollouts: &[RolloutResult]) -> Result<(), CliError> {
    let header = ["rollout", "step", "declared", "truth", "belief", "instruments"].map(String::from).to_vec();
    let rows = rollouts.iter().enumerate().flat_map(|(i, r)| {
        r.events.iter().map(move |e| {
            vec![
                i.to_string(),
                e.step.to_string(),
                lds_core::pomdp::action_id(e.declared),
                e.truth.to_string(),
                e.belief.to_string(),
                e.instruments.to_string(),
            ]
        })
    });
    write_table(path, header, rows)
}

pub fn write_policy_map(path: &Path, cells: &[PolicyMapCell]) -> Result<(), CliError> {
    let header = ["belief", "volume", "action_id", "action_name"].map(String::from).to_vec();
    let rows = cells
        .iter()
        .map(|c| vec![c.belief.to_string(), c.volume.to_string(), c.action_id(), c.action_name().to_string()]);
    write_table(path, header, rows)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the config file bytes, or of the serialized defaults when
    /// no file was given.
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub model_fingerprint: Option<String>,
    pub solver: Option<SolverMeta>,
    pub outputs: Vec<PathBuf>,
    pub wall_secs: f64,
}

impl RunManifest {
    pub fn new(config_path: Option<PathBuf>, config_hash: String, seed: u64) -> Self {
        RunManifest {
            tool: "ldsplan",
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            config_path,
            config_hash,
            seed,
            threads: rayon::current_num_threads(),
            model_fingerprint: None,
            solver: None,
            outputs: Vec::new(),
            wall_secs: 0.0,
        }
    }

    /// `<primary output>.manifest.json`.
    pub fn path_for(primary: &Path) -> PathBuf {
        let mut name = primary.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        primary.with_file_name(name)
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

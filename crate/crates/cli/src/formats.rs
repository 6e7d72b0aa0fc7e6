//! Run manifest and summary files.

use std::path::Path;

use mf2a::evaluate::Confusion;
use mf2a::io::write_atomic;
use mf2a::model::Hyperparams;
use mf2a::postprocess::AttritionStage;
use mf2a::sampler::MhDiagnostics;
use mf2a::{Error, Result};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DATA_FILE: &str = "data.csv";
pub const TRUTH_FILE: &str = "truth.json";

pub fn trace_file(chain: usize) -> String {
    format!("trace_chain{chain}.jsonl")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: usize,
    pub seed: u64,
    pub trace: String,
    pub draws: usize,
    pub diagnostics: MhDiagnostics,
    pub acceptance_alpha_m: f64,
    pub acceptance_alpha_b: f64,
}

/// Everything needed to reproduce and audit a fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub data_path: String,
    pub data_digest: String,
    pub standardized: bool,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub column_names: Vec<String>,
    pub hyper: Hyperparams,
    pub k_max_cap: usize,
    pub record_alloc_every: u64,
    pub base_seed: u64,
    pub chains: Vec<ChainReport>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub chain: usize,
    pub iter: u64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "K_plus")]
    pub k_plus: usize,
}

/// Identified posterior as written by `summarize`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub data_digest: String,
    pub standardized: bool,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub draws_total: usize,
    #[serde(rename = "K_hat")]
    pub k_hat: usize,
    #[serde(rename = "H_hat")]
    pub h_hat: Vec<usize>,
    pub m_tilde: usize,
    pub m_retained: usize,
    pub attrition: Vec<AttritionStage>,
    pub mu_mean: Vec<Vec<f64>>,
    /// Row-major p x p per cluster.
    pub omega_mean: Vec<Vec<f64>>,
    pub omega_sq_mean: Vec<Vec<f64>>,
    /// Zero-based modal cluster per observation.
    pub modal_alloc: Option<Vec<usize>>,
    /// `(K, draws)` over all draws.
    pub k_posterior: Vec<(usize, usize)>,
    /// `(K_plus, draws)` over all draws.
    pub kplus_posterior: Vec<(usize, usize)>,
    /// Draws per active-column count, per cluster, after relabeling.
    pub h_counts: Vec<Vec<usize>>,
    pub kplus_trace: Vec<TracePoint>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scores {
    pub ari: f64,
    pub error_pct: f64,
    /// `(estimated cluster, true cluster, MSE)`, one-based labels.
    pub mse_omega: Vec<(usize, usize, f64)>,
    pub confusion: Confusion,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Builds a CSV in memory and writes it atomically.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

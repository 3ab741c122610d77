//! CSV result rows and atomic file output.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use crate::harness::{ExperimentPlan, PfsEstimate};

pub const COLUMNS: [&str; 11] = [
    "experiment",
    "policy",
    "family",
    "K",
    "T",
    "replications",
    "pcs",
    "stderr",
    "mean_evaluations",
    "base_seed",
    "wall_time_s",
];

/// One (policy, budget) point of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub policy: String,
    pub family: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: u64,
    pub replications: usize,
    pub pcs: f64,
    pub stderr: f64,
    pub mean_evaluations: f64,
    pub base_seed: u64,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn from_estimate(experiment: &str, plan: &ExperimentPlan, e: &PfsEstimate) -> Self {
        Self {
            experiment: experiment.to_string(),
            policy: plan.policy.name().to_string(),
            family: plan.instance.family().to_string(),
            k: plan.instance.system_count(),
            t: e.budget,
            replications: e.replications,
            pcs: e.pcs,
            stderr: e.stderr,
            mean_evaluations: e.mean_evaluations,
            base_seed: plan.base_seed,
            wall_time_s: e.wall_time,
        }
    }
}

/// Serializes rows with the header always present.
pub fn to_csv(rows: &[ResultRow]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| anyhow!("csv buffer: {e}"))
}

/// Parses rows, naming the first missing column on schema mismatch.
pub fn from_csv(bytes: &[u8]) -> anyhow::Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let headers = r.headers().context("reading CSV header")?.clone();
    if let Some(missing) = COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        bail!("CSV is missing column '{missing}'");
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.with_context(|| format!("CSV data row {}", i + 1)))
        .collect()
}

pub fn read_rows(path: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    from_csv(&bytes).with_context(|| format!("{}", path.display()))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Fixed-width summary for the terminal.
pub fn summary_table(rows: &[ResultRow]) -> String {
    let mut out = format!("{:<12} {:>10} {:>8} {:>8} {:>12}\n", "policy", "T", "pcs", "stderr", "mean_evals");
    for r in rows {
        out.push_str(&format!(
            "{:<12} {:>10} {:>8.4} {:>8.4} {:>12.1}\n",
            r.policy, r.t, r.pcs, r.stderr, r.mean_evaluations
        ));
    }
    out
}

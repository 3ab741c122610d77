//! Run configuration files (TOML) and their line-anchored diagnostics.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::harness::{ExperimentPlan, PlanIssue};

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Experiment name; also the stem of every output file.
    pub name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Render an SVG next to the CSV.
    #[serde(default = "default_true")]
    pub chart: bool,
    /// Chart log10 PFS instead of PCS.
    #[serde(default)]
    pub log_pfs: bool,
    pub plan: ExperimentPlan,
}

/// A configuration problem located in the source text.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: usize,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.path.display(), self.line)?;
        if let Some(c) = self.column {
            write!(f, ":{c}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    /// Parses and validates `text`; `path` only labels diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => line_col(text, span.start),
                None => (1, 1),
            };
            ConfigError {
                path: path.to_path_buf(),
                line,
                column: Some(column),
                message: e.message().trim().to_string(),
            }
        })?;
        if cfg.name.trim().is_empty() || cfg.name.contains(['/', '\\']) {
            return Err(ConfigError {
                path: path.to_path_buf(),
                line: locate_key(text, "", "name"),
                column: None,
                message: "name: must be non-empty and free of path separators".into(),
            });
        }
        cfg.plan.validate().map_err(|issue| anchor(text, path, &issue))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
        Ok(Self::parse(&text, path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }
}

/// Anchors a plan issue to the line defining its field.
pub fn anchor(text: &str, path: &Path, issue: &PlanIssue) -> ConfigError {
    let (table, key) = match issue.field.rsplit_once('.') {
        Some((t, k)) => (format!("plan.{t}"), k),
        None => ("plan".to_string(), issue.field),
    };
    ConfigError {
        path: path.to_path_buf(),
        line: locate_key(text, &table, key),
        column: None,
        message: issue.to_string(),
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// 1-based line defining `key` in `table` (either under a `[table]` header or
/// as a dotted key from a parent table). Falls back to the table header, then 1.
fn locate_key(text: &str, table: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = name.trim_matches(['[', ' ']).to_string();
            if current == table {
                header_line.get_or_insert(i + 1);
            }
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs = lhs.trim();
        let full = if current.is_empty() { lhs.to_string() } else { format!("{current}.{lhs}") };
        let wanted = if table.is_empty() { key.to_string() } else { format!("{table}.{key}") };
        if full == wanted {
            return i + 1;
        }
    }
    header_line.unwrap_or(1)
}

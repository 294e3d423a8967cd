use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the JSON and TSV report layout.
pub const SCHEMA_VERSION: u32 = 1;

/// One metric of one matrix cell. A failed cell carries `error` and no value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub setting: String,
    pub tm: String,
    pub attack: String,
    pub metric: String,
    pub value: Option<f64>,
    /// Spread over repeats; verification rows only.
    pub std: Option<f64>,
    /// Seed the cell's randomness derives from.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub identities: usize,
    pub images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub dataset: DatasetSummary,
    pub rows: Vec<ReportRow>,
}

pub const TSV_HEADER: [&str; 8] = ["method", "setting", "tm", "attack", "metric", "value", "std", "seed"];

impl AttackReport {
    pub fn new(master_seed: u64, dataset: DatasetSummary) -> Self {
        AttackReport { schema_version: SCHEMA_VERSION, master_seed, dataset, rows: Vec::new() }
    }

    /// Value of the matching row, if it exists and succeeded.
    pub fn value(&self, method: &str, setting: &str, tm: &str, attack: &str, metric: &str) -> Option<f64> {
        self.find(method, setting, tm, attack, metric).and_then(|r| r.value)
    }

    pub fn find(&self, method: &str, setting: &str, tm: &str, attack: &str, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.method == method && r.setting == setting && r.tm == tm && r.attack == attack && r.metric == metric
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = TSV_HEADER.join("\t");
        out.push('\n');
        for r in &self.rows {
            let value = r.value.map(|v| v.to_string()).unwrap_or_default();
            let std = r.std.map(|v| v.to_string()).unwrap_or_default();
            let metric = if r.error.is_some() { "error" } else { r.metric.as_str() };
            let fields = [&r.method, &r.setting, &r.tm, &r.attack, metric, &value, &std, &r.seed.to_string()];
            out.push_str(&fields.map(|f| f.replace(['\t', '\n'], " ")).join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("cannot serialize report: {e}")))
    }

    /// Parses a JSON report, rejecting other schema versions before reading
    /// the body.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config { field: "report".into(), reason: e.to_string() })?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Config {
                    field: "schema_version".into(),
                    reason: format!("report has version {v}, this build reads {SCHEMA_VERSION}"),
                })
            }
            None => return Err(Error::Config { field: "schema_version".into(), reason: "missing".into() }),
        }
        serde_json::from_value(value).map_err(|e| Error::Config { field: "report".into(), reason: e.to_string() })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Writes `report.json` and `report.tsv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        std::fs::write(dir.join("report.tsv"), self.to_tsv())?;
        Ok(())
    }

    /// Aligned text table, one line per row in report order.
    pub fn render_table(&self) -> String {
        let header = ["method", "setting", "tm", "attack", "metric", "value", "std"].map(String::from);
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                let value = match (&r.error, r.value) {
                    (Some(e), _) => format!("FAILED: {e}"),
                    (None, Some(v)) => format!("{v:.4}"),
                    (None, None) => "-".into(),
                };
                let std = r.std.map(|s| format!("{s:.4}")).unwrap_or_default();
                [r.method.clone(), r.setting.clone(), r.tm.clone(), r.attack.clone(), r.metric.clone(), value, std]
            })
            .collect();
        let mut widths = header.clone().map(|h| h.len());
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String; 7]| {
            let mut s = String::new();
            for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
                if i > 0 {
                    s.push_str("  ");
                }
                let _ = write!(s, "{cell:<w$}");
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = line(&header);
        for row in &body {
            out.push_str(&line(row));
        }
        out
    }
}

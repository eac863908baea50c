//! Output files. Everything is written to a temporary file in the target
//! directory and renamed into place.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::armsrace::{grand_total, CycleReport};
use crate::error::Result;
use crate::eval::ToolScore;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| std::io::Error::other(e.to_string()).into())
}

#[derive(Debug, Serialize)]
struct CycleRow<'a> {
    cycle: usize,
    tool: &'a str,
    classification: f64,
    operating: f64,
    storage: f64,
    implementation: f64,
    total: f64,
    fn_rate: f64,
    fp_rate: f64,
    feature_set: String,
    frozen: bool,
}

/// One row per cycle.
pub fn cycles_csv(reports: &[CycleReport]) -> Result<Vec<u8>> {
    to_csv(reports.iter().map(|r| CycleRow {
        cycle: r.cycle,
        tool: &r.tool,
        classification: r.cost.classification,
        operating: r.cost.operating,
        storage: r.cost.storage,
        implementation: r.cost.implementation,
        total: r.cost.total,
        fn_rate: r.confusion.fn_rate,
        fp_rate: r.confusion.fp_rate,
        feature_set: r.feature_set.label(),
        frozen: r.frozen,
    }))
}

#[derive(Debug, Serialize)]
struct ScoreRow<'a> {
    rank: usize,
    tool: &'a str,
    score: String,
    feature_set: String,
    obfuscated_features: String,
}

fn score_cell(s: &ToolScore) -> String {
    s.score.map_or_else(|| "infeasible".to_owned(), |v| v.to_string())
}

fn obfuscated_cell(s: &ToolScore) -> String {
    s.obfuscated.iter().map(|f| f.0.as_str()).collect::<Vec<_>>().join("+")
}

/// Ranked scores, strongest tool first.
pub fn scores_csv(ranked: &[ToolScore]) -> Result<Vec<u8>> {
    to_csv(ranked.iter().enumerate().map(|(i, s)| ScoreRow {
        rank: i + 1,
        tool: &s.tool,
        score: score_cell(s),
        feature_set: s.feature_set.as_ref().map_or_else(|| "-".to_owned(), |f| f.label()),
        obfuscated_features: obfuscated_cell(s),
    }))
}

pub fn scores_table(ranked: &[ToolScore]) -> String {
    let rows: Vec<[String; 5]> = ranked
        .iter()
        .enumerate()
        .map(|(i, s)| {
            [
                (i + 1).to_string(),
                s.tool.clone(),
                score_cell(s),
                s.feature_set.as_ref().map_or_else(|| "-".to_owned(), |f| f.label()),
                obfuscated_cell(s),
            ]
        })
        .collect();
    let header = ["rank", "tool", "score", "feature set", "obfuscated"].map(str::to_owned);
    let mut widths = header.clone().map(|h| h.len());
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for r in std::iter::once(&header).chain(&rows) {
        let line: Vec<String> = r.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub frozen_classifier: bool,
    pub cycles: Vec<CycleReport>,
    pub grand_total: f64,
    pub final_fn_rate: f64,
    pub final_fp_rate: f64,
    /// Ranking of the declared tools, when there are at least two.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Vec<ToolScore>>,
}

impl RunReport {
    pub fn new(
        scenario: &str,
        seed: u64,
        frozen: bool,
        cycles: Vec<CycleReport>,
        ranking: Option<Vec<ToolScore>>,
    ) -> Self {
        let last = cycles
            .last()
            .map(|c| (c.confusion.fn_rate, c.confusion.fp_rate))
            .unwrap_or_default();
        RunReport {
            scenario: scenario.to_owned(),
            seed,
            frozen_classifier: frozen,
            grand_total: grand_total(&cycles),
            final_fn_rate: last.0,
            final_fp_rate: last.1,
            cycles,
            ranking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub grand_total: f64,
    pub final_fn_rate: f64,
    pub final_fp_rate: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<Vec<u8>> {
    to_csv(rows)
}

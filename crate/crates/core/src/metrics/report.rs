use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryStatus {
    Ok,
    /// Ranked, but the manifest carries no ground truth for it.
    Unlabeled,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query_id: String,
    pub status: QueryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Final top-k ids.
    #[serde(default)]
    pub top_k: Vec<String>,
    /// 1-based position of the best-ranked target in the evaluation ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_target_rank: Option<usize>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub dataset: String,
    pub config: PipelineConfig,
    pub chat_backend: String,
    pub embed_backend: String,
    pub version: String,
    /// Ablation or sweep label; empty for a plain run.
    #[serde(default)]
    pub label: String,
}

/// Wall-clock figures; excluded from every determinism comparison.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_ms: f64,
    /// Summed per-stage time across queries.
    pub stage_ms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    /// Dataset-level metric means over successfully evaluated queries.
    pub metrics: BTreeMap<String, f64>,
    pub queries: usize,
    pub evaluated: usize,
    pub failures: usize,
    pub per_query: Vec<QueryRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl EvalReport {
    pub fn without_timing(&self) -> Self {
        Self { timing: None, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Aligned two-column metric table followed by the run summary.
    pub fn to_text_table(&self) -> String {
        let width = self.metrics.keys().map(String::len).max().unwrap_or(6).max(6);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}", "metric", "value");
        let _ = writeln!(out, "{}  {}", "-".repeat(width), "-".repeat(8));
        for (name, value) in &self.metrics {
            let _ = writeln!(out, "{name:<width$}  {:>8.2}", value * 100.0);
        }
        let _ = writeln!(
            out,
            "\ndataset {}  queries {}  evaluated {}  failed {}",
            self.metadata.dataset, self.queries, self.evaluated, self.failures
        );
        if let Some(t) = &self.timing {
            let _ = writeln!(out, "wall clock {:.1} ms", t.wall_clock_ms);
        }
        out
    }
}

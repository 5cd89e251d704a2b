//! Multi-run experiment statistics: per-metric mean and sample standard
//! deviation over a series of reports, and paired significance tests between
//! two series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{paired_t_one_sided, wilcoxon_signed_rank, EvalReport, SignificanceError};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("need at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("series have {0} and {1} runs; pairing needs equal counts")]
    UnpairedRuns(usize, usize),
    #[error("run {index} of series {label:?} disagrees with the first run on {what}")]
    Inconsistent { label: String, index: usize, what: &'static str },
    #[error("metric {0:?} is not reported by the series")]
    UnknownMetric(String),
    #[error("reading {path}: {message}")]
    Read { path: std::path::PathBuf, message: String },
}

/// Repeated runs of one method. Runs are paired with another series by
/// position, so both must list their seeds in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub label: String,
    pub runs: Vec<EvalReport>,
}

impl RunSeries {
    /// Checks that every run shares the first run's dataset, cutoff and metric set.
    pub fn new(label: impl Into<String>, runs: Vec<EvalReport>) -> Result<Self, StatsError> {
        let label = label.into();
        if let Some(first) = runs.first() {
            let keys: BTreeSet<&String> = first.metrics.keys().collect();
            for (index, run) in runs.iter().enumerate().skip(1) {
                let what = if run.metadata.dataset != first.metadata.dataset {
                    "dataset"
                } else if run.metadata.config.k != first.metadata.config.k {
                    "k"
                } else if run.metrics.keys().collect::<BTreeSet<_>>() != keys {
                    "metric set"
                } else {
                    continue;
                };
                return Err(StatsError::Inconsistent { label, index, what });
            }
        }
        Ok(Self { label, runs })
    }

    /// Reads every `*.json` report in `dir`, ordered by file name.
    pub fn load_dir(label: impl Into<String>, dir: &Path) -> Result<Self, StatsError> {
        let read_err = |path: &Path, message: String| StatsError::Read { path: path.to_path_buf(), message };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| read_err(dir, e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let runs = paths
            .iter()
            .map(|p| {
                let text = std::fs::read_to_string(p).map_err(|e| read_err(p, e.to_string()))?;
                EvalReport::from_json(&text).map_err(|e| read_err(p, e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(label, runs)
    }

    pub fn metric_names(&self) -> Vec<String> {
        self.runs.first().map(|r| r.metrics.keys().cloned().collect()).unwrap_or_default()
    }

    pub fn values(&self, metric: &str) -> Result<Vec<f64>, StatsError> {
        self.runs
            .iter()
            .map(|r| r.metrics.get(metric).copied().ok_or_else(|| StatsError::UnknownMetric(metric.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub stddev: f64,
    pub runs: usize,
}

pub fn summarize_values(values: &[f64]) -> Result<Summary, StatsError> {
    let n = values.len();
    if n < 2 {
        return Err(StatsError::TooFewRuns(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Summary { mean, stddev: var.sqrt(), runs: n })
}

/// Mean and standard deviation of every metric across the series.
pub fn summarize(series: &RunSeries) -> Result<BTreeMap<String, Summary>, StatsError> {
    if series.runs.len() < 2 {
        return Err(StatsError::TooFewRuns(series.runs.len()));
    }
    series
        .metric_names()
        .into_iter()
        .map(|m| Ok((m.clone(), summarize_values(&series.values(&m)?)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every computable test rejects H0 (a is not better) at [`ALPHA`].
    Reject,
    NoEvidence,
}

/// Outcome of testing H1: series `a` scores higher than series `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_p: Option<f64>,
    pub wilcoxon_p: Option<f64>,
    /// Why a test produced no p-value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

fn verdict(ps: &[Option<f64>]) -> Verdict {
    let computed: Vec<f64> = ps.iter().flatten().copied().collect();
    if !computed.is_empty() && computed.iter().all(|p| *p < ALPHA) {
        Verdict::Reject
    } else {
        Verdict::NoEvidence
    }
}

/// Paired one-sided tests of `a` over `b` on one metric.
pub fn compare_metric(a: &RunSeries, b: &RunSeries, metric: &str) -> Result<Significance, StatsError> {
    if a.runs.len() != b.runs.len() {
        return Err(StatsError::UnpairedRuns(a.runs.len(), b.runs.len()));
    }
    let (va, vb) = (a.values(metric)?, b.values(metric)?);
    let mut notes = Vec::new();
    let mut keep = |name: &str, r: Result<f64, SignificanceError>| match r {
        Ok(p) => Some(p),
        Err(SignificanceError::Unpaired(x, y)) => unreachable!("lengths checked: {x} vs {y}"),
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            None
        }
    };
    let t_p = keep("t-test", paired_t_one_sided(&va, &vb));
    let wilcoxon_p = keep("wilcoxon", wilcoxon_signed_rank(&va, &vb));
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(Significance {
        metric: metric.to_string(),
        mean_a: mean(&va),
        mean_b: mean(&vb),
        t_p,
        wilcoxon_p,
        notes,
        verdict: verdict(&[t_p, wilcoxon_p]),
    })
}

/// [`compare_metric`] over every metric the two series share.
pub fn compare(a: &RunSeries, b: &RunSeries) -> Result<Vec<Significance>, StatsError> {
    if a.runs.len() != b.runs.len() {
        return Err(StatsError::UnpairedRuns(a.runs.len(), b.runs.len()));
    }
    let shared: BTreeSet<String> = b.metric_names().into_iter().collect();
    a.metric_names()
        .into_iter()
        .filter(|m| shared.contains(m))
        .map(|m| compare_metric(a, b, &m))
        .collect()
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p != 0.0 && p < 1e-3 => format!("{p:.2e}"),
        Some(p) => format!("{p:.4}"),
        None => "n/a".to_string(),
    }
}

/// Method / Mean (%) / StdDev / t-test p / Wilcoxon p table, one row per
/// baseline tested against `ours`, with `ours` last and no p-values.
pub fn significance_table(ours: &RunSeries, baselines: &[RunSeries], metric: &str) -> Result<String, StatsError> {
    let width = baselines.iter().chain([ours]).map(|s| s.label.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>6}  {:>10}  {:>10}", "Method", "Mean (%)", "StdDev", "t-test p", "Wilcoxon p");
    let _ = writeln!(out, "{}", "-".repeat(width + 44));
    for base in baselines {
        let s = summarize_values(&base.values(metric)?)?;
        let sig = compare_metric(ours, base, metric)?;
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.2}  {:>6.2}  {:>10}  {:>10}",
            base.label,
            s.mean * 100.0,
            s.stddev * 100.0,
            fmt_p(sig.t_p),
            fmt_p(sig.wilcoxon_p)
        );
    }
    let s = summarize_values(&ours.values(metric)?)?;
    let _ = writeln!(out, "{:<width$}  {:>8.2}  {:>6.2}  {:>10}  {:>10}", ours.label, s.mean * 100.0, s.stddev * 100.0, "--", "--");
    let _ = writeln!(out, "\nmetric {metric}; paired one-sided tests of H1: {} > baseline, alpha = {ALPHA}", ours.label);
    Ok(out)
}

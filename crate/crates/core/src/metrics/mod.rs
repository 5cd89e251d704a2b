//! Retrieval metrics and significance tests.

mod report;
mod significance;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use report::{EvalReport, QueryRow, QueryStatus, RunMetadata, Timing};
pub use significance::{paired_t_one_sided, wilcoxon_signed_rank, wilcoxon_exact_sf, SignificanceError, EXACT_WILCOXON_MAX_N};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("ranking is empty")]
    EmptyRanking,
    #[error("no member of the subset appears in the ranking")]
    EmptySubsetRanking,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("ground truth has no targets")]
    NoTargets,
}

/// Relevant images for one query, with the optional CIRR-style subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub query_id: String,
    pub targets: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<BTreeSet<String>>,
}

fn check(ranked: &[impl AsRef<str>], k: usize) -> Result<(), MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroK);
    }
    if ranked.is_empty() {
        return Err(MetricError::EmptyRanking);
    }
    Ok(())
}

/// 1.0 when any target sits in the first `k` positions, else 0.0.
pub fn recall_at_k(ranked: &[impl AsRef<str>], targets: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
    check(ranked, k)?;
    let hit = ranked.iter().take(k).any(|id| targets.contains(id.as_ref()));
    Ok(if hit { 1.0 } else { 0.0 })
}

/// Truncated average precision with denominator `min(|targets|, k)`.
pub fn map_at_k(ranked: &[impl AsRef<str>], targets: &BTreeSet<String>, k: usize) -> Result<f64, MetricError> {
    check(ranked, k)?;
    if targets.is_empty() {
        return Err(MetricError::NoTargets);
    }
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (pos, id) in ranked.iter().take(k).enumerate() {
        if targets.contains(id.as_ref()) {
            hits += 1;
            precision_sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(precision_sum / targets.len().min(k) as f64)
}

/// Recall@k after dropping every ranked id outside `subset`.
pub fn subset_recall_at_k(
    ranked: &[impl AsRef<str>],
    targets: &BTreeSet<String>,
    subset: &BTreeSet<String>,
    k: usize,
) -> Result<f64, MetricError> {
    let restricted: Vec<&str> = ranked
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| subset.contains(*id))
        .collect();
    if restricted.is_empty() {
        return Err(MetricError::EmptySubsetRanking);
    }
    recall_at_k(&restricted, targets, k)
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    fn ranking(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("i{i}")).collect()
    }

    #[test]
    fn recall_examples() {
        let r = ranking(20);
        assert_eq!(recall_at_k(&r, &set(&["i1"]), 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&r, &set(&["i11"]), 10).unwrap(), 0.0);
        let hits = [1.0, 0.0, 1.0, 1.0];
        assert_eq!(mean(&hits), Some(0.75));
        assert_eq!(recall_at_k(&Vec::<String>::new(), &set(&["a"]), 1), Err(MetricError::EmptyRanking));
        assert_eq!(recall_at_k(&r, &set(&["i1"]), 0), Err(MetricError::ZeroK));
    }

    #[test]
    fn map_examples() {
        let r = ranking(10);
        let ap = map_at_k(&r, &set(&["i1", "i3"]), 5).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(map_at_k(&r, &set(&["i1", "i2", "i3"]), 5).unwrap(), 1.0);
        assert_eq!(map_at_k(&r, &set(&["i9"]), 5).unwrap(), 0.0);
        // single target at rank r <= k gives 1/r
        assert!((map_at_k(&r, &set(&["i4"]), 10).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn subset_examples() {
        let r: Vec<String> = ["a", "b", "t", "c"].iter().map(|s| s.to_string()).collect();
        let targets = set(&["t"]);
        let subset = set(&["b", "t"]);
        assert_eq!(subset_recall_at_k(&r, &targets, &subset, 1).unwrap(), 0.0);
        assert_eq!(subset_recall_at_k(&r, &targets, &subset, 2).unwrap(), 1.0);
        assert_eq!(
            subset_recall_at_k(&r, &targets, &set(&["zz"]), 1),
            Err(MetricError::EmptySubsetRanking)
        );
    }

    #[test]
    fn recall_is_monotone_in_k() {
        let r = ranking(30);
        let t = set(&["i17"]);
        let mut prev = 0.0;
        for k in 1..=30 {
            let v = recall_at_k(&r, &t, k).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }
}

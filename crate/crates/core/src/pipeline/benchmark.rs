use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::Instant;

use super::{run_query, PipelineError, QueryFailure, QueryTrace, RunOptions, Stage, StageError, VERSION};
use crate::agents::Agents;
use crate::datasets::{Manifest, MetricPlan};
use crate::domain::{validate_config, PipelineConfig};
use crate::embed_index::Catalog;
use crate::exec;
use crate::metrics::{
    self, map_at_k, recall_at_k, subset_recall_at_k, EvalReport, GroundTruth, MetricError, QueryRow, QueryStatus,
    RunMetadata, Timing,
};

type Outcome = Result<(QueryTrace, Option<BTreeMap<String, f64>>), QueryFailure>;

/// Fraction of failed queries above which a benchmark aborts.
pub const DEFAULT_FAILURE_THRESHOLD: f64 = 0.10;

#[derive(Debug)]
pub struct BenchmarkRun {
    pub report: EvalReport,
    /// Traces of completed queries, in manifest order.
    pub traces: Vec<QueryTrace>,
    pub failures: Vec<QueryFailure>,
}

/// The full ranking scored by the metrics: the re-ranked shortlist followed
/// by the rest of the catalog in fused order, without the reference image
/// (which is never a valid answer to its own query).
pub fn evaluation_ranking<'a>(trace: &'a QueryTrace, reference: &str) -> Vec<&'a str> {
    let shortlisted: HashSet<&str> = trace.shortlist.iter().map(String::as_str).collect();
    trace
        .fine_records()
        .map(|r| r.id.as_str())
        .chain(trace.coarse.iter().map(|c| c.id.as_str()).filter(|id| !shortlisted.contains(id)))
        .filter(|id| *id != reference)
        .collect()
}

fn query_metrics(plan: &MetricPlan, ranking: &[&str], gt: &GroundTruth) -> Result<BTreeMap<String, f64>, MetricError> {
    let mut out = BTreeMap::new();
    for &k in &plan.recall {
        out.insert(format!("R@{k}"), recall_at_k(ranking, &gt.targets, k)?);
    }
    for &k in &plan.map {
        out.insert(format!("mAP@{k}"), map_at_k(ranking, &gt.targets, k)?);
    }
    if let Some(subset) = &gt.subset {
        for &k in &plan.subset_recall {
            out.insert(format!("Rsubset@{k}"), subset_recall_at_k(ranking, &gt.targets, subset, k)?);
        }
    }
    Ok(out)
}

fn check_coverage(manifest: &Manifest, catalog: &Catalog) -> Result<(), PipelineError> {
    let mut missing = BTreeSet::new();
    for q in &manifest.queries {
        for id in std::iter::once(&q.reference).chain(&q.targets).chain(q.subset.iter().flatten()) {
            if catalog.position(id).is_none() {
                missing.insert(id.clone());
            }
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::Coverage(missing.into_iter().collect()))
    }
}

/// Runs every manifest query and aggregates the dataset's metrics.
///
/// Failed queries are recorded and excluded from the means; the run aborts
/// once the failed fraction exceeds `opts.failure_threshold`.
pub fn run_benchmark(
    manifest: &Manifest,
    catalog: &Catalog,
    agents: &Agents,
    cfg: &PipelineConfig,
    opts: &RunOptions,
    label: &str,
) -> Result<BenchmarkRun, PipelineError> {
    let cfg = validate_config(cfg.clone())?;
    opts.check()?;
    if !catalog.is_built() {
        return Err(PipelineError::UnbuiltCatalog);
    }
    check_coverage(manifest, catalog)?;

    let start = Instant::now();
    let queries = manifest.domain_queries();
    let truths = manifest.ground_truth();
    let plan = manifest.dataset.metric_plan();
    let total = queries.len();

    let mut outcomes: Vec<Outcome> = Vec::with_capacity(total);
    let mut failed = 0usize;
    let window = opts.query_parallelism.max(1);
    for (w, chunk) in queries.chunks(window).enumerate() {
        let results = exec::map_range(opts.exec, chunk.len(), |j| {
            let i = w * window + j;
            let query = &chunk[j];
            let trace = run_query(query, catalog, agents, &cfg, opts)?;
            let metrics = match &truths[i] {
                None => None,
                Some(gt) => {
                    let ranking = evaluation_ranking(&trace, &query.reference.id);
                    let m = query_metrics(&plan, &ranking, gt).map_err(|e| QueryFailure {
                        query_id: query.query_id.clone(),
                        stage: Stage::Metrics,
                        source: StageError::Metric(e),
                    })?;
                    Some(m)
                }
            };
            Ok((trace, metrics))
        });
        for r in results {
            if let Err(f) = &r {
                log::warn!("{f}");
                failed += 1;
            }
            outcomes.push(r);
        }
        if failed as f64 > opts.failure_threshold * total as f64 {
            return Err(PipelineError::TooManyFailures { failed, total, threshold: opts.failure_threshold });
        }
    }
    if failed > 0 {
        log::warn!("{failed} of {total} queries failed and are excluded from the metrics");
    }

    let mut rows = Vec::with_capacity(total);
    let mut traces = Vec::with_capacity(total);
    let mut failures = Vec::new();
    let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut stage_ms: BTreeMap<String, f64> = BTreeMap::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let query_id = manifest.queries[i].id.clone();
        match outcome {
            Ok((trace, metrics)) => {
                for (stage, ms) in &trace.timings {
                    *stage_ms.entry(stage.to_string()).or_default() += ms;
                }
                let status = if metrics.is_some() { QueryStatus::Ok } else { QueryStatus::Unlabeled };
                let first_target_rank = truths[i].as_ref().and_then(|gt| {
                    evaluation_ranking(&trace, &manifest.queries[i].reference)
                        .iter()
                        .position(|id| gt.targets.contains(*id))
                        .map(|p| p + 1)
                });
                let metrics = metrics.unwrap_or_default();
                for (name, v) in &metrics {
                    per_metric.entry(name.clone()).or_default().push(*v);
                }
                rows.push(QueryRow {
                    query_id,
                    status,
                    error: None,
                    top_k: trace.top_k.clone(),
                    first_target_rank,
                    metrics,
                });
                traces.push(trace);
            }
            Err(failure) => {
                rows.push(QueryRow {
                    query_id,
                    status: QueryStatus::Failed,
                    error: Some(failure.to_string()),
                    top_k: Vec::new(),
                    first_target_rank: None,
                    metrics: BTreeMap::new(),
                });
                failures.push(failure);
            }
        }
    }

    let evaluated = rows.iter().filter(|r| r.status == QueryStatus::Ok).count();
    let report = EvalReport {
        metadata: RunMetadata {
            dataset: manifest.dataset.to_string(),
            config: cfg,
            chat_backend: agents.chat_identity().to_string(),
            embed_backend: agents.embed_identity().to_string(),
            version: VERSION.to_string(),
            label: label.to_string(),
        },
        metrics: per_metric
            .into_iter()
            .filter_map(|(name, values)| metrics::mean(&values).map(|m| (name, m)))
            .collect(),
        queries: total,
        evaluated,
        failures: failures.len(),
        per_query: rows,
        timing: Some(Timing { wall_clock_ms: start.elapsed().as_secs_f64() * 1e3, stage_ms }),
    };
    Ok(BenchmarkRun { report, traces, failures })
}

//! End-to-end orchestration: one query through imagination, coarse and fine
//! filtering, and whole benchmarks with failure isolation and ablations.

mod ablation;
mod benchmark;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentError, Agents, QuestionSet};
use crate::coarse::{self, CoarseError, FusionOptions};
use crate::domain::{Caption, CaptionSource, ConfigError, ImaginationResult, InputError, PipelineConfig, Query};
use crate::embed_index::Catalog;
use crate::exec::ExecMode;
use crate::fine::{self, FineError, FineRecord, RankedResult, VerificationScores, VerifyOptions};
use crate::metrics::MetricError;

pub use ablation::{ablate, AblationRun, AblationSpec};
pub use benchmark::{evaluation_ranking, run_benchmark, BenchmarkRun, DEFAULT_FAILURE_THRESHOLD};
pub use trace::{read_trace, trace_file_name, write_run_dir, write_trace, TraceRecord, RUN_FILE, TRACES_DIR};

/// Build identifier recorded in run manifests.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("XR_GIT_DESCRIBE"));

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Caption,
    Imagination,
    Coarse,
    Questions,
    Verify,
    Rerank,
    Metrics,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Caption => "caption",
            Stage::Imagination => "imagination",
            Stage::Coarse => "coarse",
            Stage::Questions => "questions",
            Stage::Verify => "verify",
            Stage::Rerank => "rerank",
            Stage::Metrics => "metrics",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Coarse(#[from] CoarseError),
    #[error(transparent)]
    Fine(#[from] FineError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// A query that could not be completed, tagged with the stage that failed.
#[derive(Debug, thiserror::Error)]
#[error("query {query_id} failed at {stage}: {source}")]
pub struct QueryFailure {
    pub query_id: String,
    pub stage: Stage,
    #[source]
    pub source: StageError,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("catalog is missing {} image(s) the manifest needs, e.g. {:?}", .0.len(), .0[0])]
    Coverage(Vec<String>),
    #[error("catalog has not been built")]
    UnbuiltCatalog,
    #[error("aborted: {failed} of {total} queries failed (threshold {threshold})")]
    TooManyFailures { failed: usize, total: usize, threshold: f64 },
    #[error("trace io on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace line {line}: {message}")]
    Trace { line: usize, message: String },
}

/// Execution and ablation switches layered on top of [`PipelineConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub exec: ExecMode,
    pub fusion: FusionOptions,
    pub verify: VerifyOptions,
    /// Skip shortlist selection and verify every catalog candidate.
    pub bypass_select: bool,
    /// Queries in flight at once during a benchmark.
    pub query_parallelism: usize,
    /// Largest tolerated fraction of failed queries.
    pub failure_threshold: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            exec: ExecMode::default(),
            fusion: FusionOptions::default(),
            verify: VerifyOptions::default(),
            bypass_select: false,
            query_parallelism: 4,
            failure_threshold: DEFAULT_FAILURE_THRESHOLD,
        }
    }
}

impl RunOptions {
    pub fn questions_enabled(&self) -> bool {
        self.verify.use_text || self.verify.use_vision
    }

    /// λ as used by the fine stage: a disabled similarity modality pins the
    /// weight onto the other one.
    pub fn effective_lambda(&self, lambda: f64) -> f64 {
        match (self.fusion.use_text, self.fusion.use_vision) {
            (true, false) => 1.0,
            (false, true) => 0.0,
            _ => lambda,
        }
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !self.fusion.use_text && !self.fusion.use_vision && !self.questions_enabled() {
            return Err(ConfigError("every similarity and question modality is disabled; nothing left to rank".into()));
        }
        if self.query_parallelism == 0 {
            return Err(ConfigError("query_parallelism must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.failure_threshold) {
            return Err(ConfigError("failure threshold outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-candidate coarse-stage record, in fused order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseRecord {
    pub id: String,
    pub s_tt: f64,
    pub s_tv: f64,
    pub s_vt: f64,
    pub s_vv: f64,
    pub s_t: f64,
    pub s_v: f64,
    pub rank_t: usize,
    pub rank_v: usize,
    /// Fused score (reciprocal-rank by default, raw sum under `--fusion sum`).
    pub rrf: f64,
}

/// Everything one query produced, in stage order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryTrace {
    pub query_id: String,
    pub reference_caption: Caption,
    pub imagination: ImaginationResult,
    /// Every candidate, best fused score first.
    pub coarse: Vec<CoarseRecord>,
    /// Ids handed to fine filtering, in shortlist order.
    pub shortlist: Vec<String>,
    pub questions: QuestionSet,
    pub verification: VerificationScores,
    pub fine: RankedResult,
    /// Final top-k ids.
    pub top_k: Vec<String>,
    /// Wall-clock milliseconds per stage; never part of any comparison.
    #[serde(skip)]
    pub timings: BTreeMap<Stage, f64>,
}

impl QueryTrace {
    /// Fine-stage records in final order.
    pub fn fine_records(&self) -> impl Iterator<Item = &FineRecord> {
        self.fine.order.iter().map(|&slot| &self.fine.provenance[slot])
    }
}

struct Timer(BTreeMap<Stage, f64>);

impl Timer {
    fn run<T>(
        &mut self,
        query_id: &str,
        stage: Stage,
        f: impl FnOnce() -> Result<T, StageError>,
    ) -> Result<T, QueryFailure> {
        let start = Instant::now();
        let out = f();
        *self.0.entry(stage).or_default() += start.elapsed().as_secs_f64() * 1e3;
        out.map_err(|source| QueryFailure { query_id: query_id.to_string(), stage, source })
    }
}

/// Runs one query through every stage.
///
/// `cfg` must already be validated and `catalog` built; an agent or stage
/// error aborts the query with a [`QueryFailure`] naming the stage.
pub fn run_query(
    query: &Query,
    catalog: &Catalog,
    agents: &Agents,
    cfg: &PipelineConfig,
    opts: &RunOptions,
) -> Result<QueryTrace, QueryFailure> {
    let qid = query.query_id.as_str();
    let mut timer = Timer(BTreeMap::new());
    let modification = query.modification_text.as_str();

    let reference_caption = timer.run(qid, Stage::Caption, || {
        Ok(agents.caption(&query.reference, CaptionSource::Reference)?)
    })?;

    let imagination = timer.run(qid, Stage::Imagination, || {
        Ok(agents.imagine(modification, &reference_caption, &query.reference)?)
    })?;

    let (coarse_records, shortlist, s_t, s_v) = timer.run(qid, Stage::Coarse, || {
        let quads = coarse::score_all_with(
            opts.exec,
            &imagination.text_caption,
            &imagination.vision_caption,
            catalog,
            agents,
        )?;
        let scores = coarse::aggregate(&quads)?;
        let fused = coarse::fuse(&scores, cfg.z, opts.fusion);
        let shortlist = if opts.bypass_select {
            (0..catalog.len()).collect()
        } else {
            coarse::select_top(&fused, cfg.k_prime)
        };
        let records = fused
            .order
            .iter()
            .map(|&i| CoarseRecord {
                id: catalog.image(i).id.clone(),
                s_tt: quads[i].s_tt,
                s_tv: quads[i].s_tv,
                s_vt: quads[i].s_vt,
                s_vv: quads[i].s_vv,
                s_t: scores.text[i],
                s_v: scores.vision[i],
                rank_t: fused.rank_text[i],
                rank_v: fused.rank_vision[i],
                rrf: fused.scores[i],
            })
            .collect::<Vec<_>>();
        let s_t: Vec<f64> = shortlist.iter().map(|&i| scores.text[i]).collect();
        let s_v: Vec<f64> = shortlist.iter().map(|&i| scores.vision[i]).collect();
        Ok((records, shortlist, s_t, s_v))
    })?;

    let questions = if opts.questions_enabled() {
        timer.run(qid, Stage::Questions, || {
            Ok(agents.generate_questions(&imagination.edits, &imagination.attributes, modification, cfg.n_questions)?)
        })?
    } else {
        QuestionSet::new(Vec::new())
    };

    let verification = if opts.questions_enabled() {
        timer.run(qid, Stage::Verify, || {
            Ok(fine::verify_with(opts.exec, &shortlist, catalog, &questions, agents, opts.verify)?)
        })?
    } else {
        VerificationScores { text: vec![0; shortlist.len()], vision: vec![0; shortlist.len()] }
    };

    let ids: Vec<String> = shortlist.iter().map(|&i| catalog.image(i).id.clone()).collect();
    let ranked = timer.run(qid, Stage::Rerank, || {
        let (t, v) = match (opts.fusion.use_text, opts.fusion.use_vision) {
            // neither similarity contributes: a constant vector normalizes to ones
            (false, false) => (vec![0.0; s_t.len()], vec![0.0; s_v.len()]),
            _ => (s_t.clone(), s_v.clone()),
        };
        let fused_sim = fine::weighted_similarity(&t, &v, opts.effective_lambda(cfg.lambda))?;
        let norm_sim = fine::min_max(&fused_sim);
        Ok(fine::rerank(&verification, &norm_sim, &fused_sim, &ids, cfg.k.min(ids.len()))?)
    })?;

    let top_k = ranked.top_k.iter().map(|&slot| ids[slot].clone()).collect();
    Ok(QueryTrace {
        query_id: query.query_id.clone(),
        reference_caption,
        imagination,
        coarse: coarse_records,
        shortlist: ids,
        questions,
        verification,
        fine: ranked,
        top_k,
        timings: timer.0,
    })
}

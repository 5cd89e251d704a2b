use serde::{Deserialize, Serialize};

use super::{run_benchmark, BenchmarkRun, PipelineError, RunOptions};
use crate::agents::Agents;
use crate::coarse::FusionMode;
use crate::datasets::Manifest;
use crate::domain::{validate_config, ConfigError, PipelineConfig};
use crate::embed_index::Catalog;

/// Modality switches applied to every run plus parameter sweeps; the runs
/// are the cartesian product of the sweeps (an empty sweep keeps the base
/// config's value).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    pub disable_text_sim: bool,
    pub disable_vision_sim: bool,
    pub disable_text_q: bool,
    pub disable_vision_q: bool,
    pub fusion_sum: bool,
    pub lambda: Vec<f64>,
    pub z: Vec<f64>,
    pub k_prime: Vec<usize>,
    pub n_questions: Vec<usize>,
}

#[derive(Debug)]
pub struct AblationRun {
    pub label: String,
    pub options: RunOptions,
    pub config: PipelineConfig,
    pub run: BenchmarkRun,
}

fn modalities(text: bool, vision: bool) -> &'static str {
    match (text, vision) {
        (true, true) => "text+vision",
        (true, false) => "text",
        (false, true) => "vision",
        (false, false) => "none",
    }
}

fn sweep<T: Copy>(values: &[T], base: T) -> Vec<T> {
    if values.is_empty() {
        vec![base]
    } else {
        values.to_vec()
    }
}

impl AblationSpec {
    /// Every on/off combination of the two similarity and two question
    /// modalities except all-off.
    pub fn modality_grid() -> Vec<AblationSpec> {
        (1u8..16)
            .map(|bits| AblationSpec {
                disable_text_sim: bits & 1 == 0,
                disable_vision_sim: bits & 2 == 0,
                disable_text_q: bits & 4 == 0,
                disable_vision_q: bits & 8 == 0,
                ..AblationSpec::default()
            })
            .collect()
    }

    pub fn apply(&self, base: &RunOptions) -> RunOptions {
        let mut opts = *base;
        opts.fusion.use_text &= !self.disable_text_sim;
        opts.fusion.use_vision &= !self.disable_vision_sim;
        opts.verify.use_text &= !self.disable_text_q;
        opts.verify.use_vision &= !self.disable_vision_q;
        if self.fusion_sum {
            opts.fusion.mode = FusionMode::Sum;
        }
        opts
    }

    /// Validated `(label, config)` pairs, one per sweep combination.
    pub fn expand(&self, base: &PipelineConfig, opts: &RunOptions) -> Result<Vec<(String, PipelineConfig)>, ConfigError> {
        let opts = self.apply(opts);
        opts.check()?;
        let prefix = format!(
            "sim={},q={},fusion={}",
            modalities(opts.fusion.use_text, opts.fusion.use_vision),
            modalities(opts.verify.use_text, opts.verify.use_vision),
            match opts.fusion.mode {
                FusionMode::Rrf => "rrf",
                FusionMode::Sum => "sum",
            }
        );
        let mut out = Vec::new();
        for &lambda in &sweep(&self.lambda, base.lambda) {
            for &z in &sweep(&self.z, base.z) {
                for &k_prime in &sweep(&self.k_prime, base.k_prime) {
                    for &n_questions in &sweep(&self.n_questions, base.n_questions) {
                        let cfg = validate_config(PipelineConfig { lambda, z, k_prime, n_questions, ..base.clone() })
                            .map_err(|e| ConfigError(format!("{prefix}: {}", e.0)))?;
                        let label = format!("{prefix},lambda={lambda},z={z},k_prime={k_prime},n_questions={n_questions}");
                        out.push((label, cfg));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Runs one benchmark per switch/sweep combination. Every combination is
/// validated before the first run starts.
pub fn ablate(
    manifest: &Manifest,
    catalog: &Catalog,
    agents: &Agents,
    cfg: &PipelineConfig,
    opts: &RunOptions,
    specs: &[AblationSpec],
) -> Result<Vec<AblationRun>, PipelineError> {
    let mut plan = Vec::new();
    for spec in specs {
        let run_opts = spec.apply(opts);
        for (label, config) in spec.expand(cfg, opts)? {
            plan.push((label, run_opts, config));
        }
    }
    plan.into_iter()
        .map(|(label, options, config)| {
            log::info!("ablation run {label}");
            let run = run_benchmark(manifest, catalog, agents, &config, &options, &label)?;
            Ok(AblationRun { label, options, config, run })
        })
        .collect()
}

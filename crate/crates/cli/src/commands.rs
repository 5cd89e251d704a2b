use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::ArgMatches;
use serde::Deserialize;
use xr_core::agents::live::{LiveChat, LiveConfig, LiveEmbedder};
use xr_core::agents::prompts::PromptSet;
use xr_core::agents::{Agents, DecodeParams, MockBackend, MockScript, ResponseCache, RetryPolicy};
use xr_core::datasets::{adapt_upstream, default_split, load_manifest, save_manifest, DatasetKind, Manifest};
use xr_core::domain::{ImageHandle, PipelineConfig};
use xr_core::embed_index::{build_catalog_with, Catalog};
use xr_core::exec::ExecMode;
use xr_core::metrics::EvalReport;
use xr_core::pipeline::{
    ablate, read_trace, run_benchmark, write_run_dir, AblationSpec, PipelineError, TraceRecord, TRACES_DIR,
};
use xr_core::stats::{self, RunSeries};

use crate::args::{AblateArgs, BackendArgs, EmbedArgs, EvalArgs, IngestArgs, RunArgs, StageArg, TraceDumpArgs};
use crate::settings::{resolve, Settings};
use crate::CliError;

fn runtime(context: &str) -> impl Fn(&dyn std::fmt::Display) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

fn pipeline_err(e: PipelineError) -> CliError {
    match e {
        PipelineError::Config(c) => CliError::Usage(format!("invalid configuration: {}", c.0)),
        other => CliError::Runtime(other.to_string()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| runtime(&format!("creating {}", parent.display()))(&e))?;
    }
    std::fs::write(path, contents).map_err(|e| runtime(&format!("writing {}", path.display()))(&e))
}

pub fn ingest(args: &IngestArgs) -> Result<(), CliError> {
    if args.dataset == DatasetKind::Custom {
        return Err(CliError::Usage("custom manifests are written by hand; pick an upstream dataset".into()));
    }
    let split = args.split.as_deref().unwrap_or(default_split(args.dataset));
    let manifest = adapt_upstream(args.dataset, &args.raw, Some(split)).map_err(|e| runtime("ingest")(&e))?;
    save_manifest(&manifest, &args.out).map_err(|e| runtime("ingest")(&e))?;
    let unlabeled = manifest.queries.iter().filter(|q| q.targets.is_empty()).count();
    eprintln!(
        "{} {split}: {} images, {} queries ({unlabeled} without ground truth) -> {}",
        args.dataset,
        manifest.images.len(),
        manifest.queries.len(),
        args.out.display()
    );
    Ok(())
}

/// Builds the agent set for `--mock` or `--live`.
fn agents(backend: &BackendArgs, cfg: &PipelineConfig) -> Result<Agents, CliError> {
    let agents = match (&backend.mock, backend.live) {
        (Some(script), false) => {
            let script = MockScript::load(script).map_err(|e| CliError::Usage(e.to_string()))?;
            let mock = MockBackend::new(script).with_noise(backend.mock_noise, backend.seed);
            Agents::from_backend(Arc::new(mock)).with_retry(RetryPolicy::immediate())
        }
        (None, true) => {
            let live = LiveConfig::from_env().map_err(CliError::Usage)?;
            let prompts = match &backend.prompts {
                Some(dir) => PromptSet::with_overrides(dir).map_err(|e| CliError::Usage(format!("prompts: {e}")))?,
                None => PromptSet::default(),
            };
            Agents::new(Arc::new(LiveChat::new(live.chat, prompts)), Arc::new(LiveEmbedder::new(live.embed)))
        }
        _ => return Err(CliError::Usage("choose a backend: --mock <script> or --live".into())),
    };
    let agents = agents
        .with_max_inflight(cfg.max_inflight)
        .with_decode(DecodeParams { temperature: cfg.temperature, top_p: cfg.top_p });
    Ok(match &backend.cache {
        Some(path) => {
            let cache = ResponseCache::open(path).map_err(|e| runtime(&format!("cache {}", path.display()))(&e))?;
            agents.with_cache(Arc::new(cache))
        }
        None => agents,
    })
}

fn load_manifest_rooted(path: &Path, root: Option<&Path>) -> Result<Manifest, CliError> {
    let mut manifest = load_manifest(path).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(root) = root {
        for img in &mut manifest.images {
            let relative = !img.uri.contains("://") && !img.uri.starts_with("data:") && Path::new(&img.uri).is_relative();
            if relative {
                let joined = root.join(&img.uri).to_string_lossy().into_owned();
                *img = ImageHandle::new(img.id.clone(), joined).map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
    }
    Ok(manifest)
}

fn build_and_save(manifest: &Manifest, path: &Path, agents: &Agents, mode: ExecMode) -> Result<Catalog, CliError> {
    let catalog = build_catalog_with(mode, manifest.images.clone(), agents).map_err(|e| runtime("building catalog")(&e))?;
    catalog.save(path).map_err(|e| runtime(&format!("writing {}", path.display()))(&e))?;
    eprintln!("catalog: {} images, dim {} -> {}", catalog.len(), catalog.dim(), path.display());
    Ok(catalog)
}

/// Loads the catalog file, or builds it when absent. A catalog embedded by a
/// different backend is refused rather than silently mixed.
fn catalog_for(manifest: &Manifest, path: &Path, agents: &Agents, mode: ExecMode) -> Result<Catalog, CliError> {
    if !path.exists() {
        return build_and_save(manifest, path, agents, mode);
    }
    let catalog = Catalog::load(path).map_err(|e| runtime(&format!("reading {}", path.display()))(&e))?;
    if catalog.embedder() != agents.embed_identity() {
        return Err(CliError::Runtime(format!(
            "{} was embedded by {:?}, but this run embeds with {:?}; rebuild it with `xr embed` or point --catalog elsewhere",
            path.display(),
            catalog.embedder(),
            agents.embed_identity()
        )));
    }
    Ok(catalog)
}

pub fn embed(args: &EmbedArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig { max_inflight: args.max_inflight, ..PipelineConfig::default() };
    let agents = agents(&args.backend, &cfg)?;
    let manifest = load_manifest_rooted(&args.manifest, args.backend.image_root.as_deref())?;
    let mode = if args.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    build_and_save(&manifest, &args.catalog, &agents, mode)?;
    eprintln!("backend calls: {}", agents.backend_calls());
    Ok(())
}

pub fn run(args: &RunArgs, matches: &ArgMatches) -> Result<(), CliError> {
    let Settings { config, options } = resolve(&args.config, matches)?;
    let agents = agents(&args.backend, &config)?;
    let manifest = load_manifest_rooted(&args.manifest, args.backend.image_root.as_deref())?;
    let catalog = catalog_for(&manifest, &args.catalog, &agents, options.exec)?;
    let run = run_benchmark(&manifest, &catalog, &agents, &config, &options, &args.label).map_err(pipeline_err)?;
    for f in &run.failures {
        eprintln!("query {} failed at {}: {}", f.query_id, f.stage, f.source);
    }
    write_file(&args.report_path, &run.report.to_json())?;
    if let Some(dir) = &args.trace {
        write_run_dir(dir, &run).map_err(pipeline_err)?;
    }
    print!("{}", run.report.to_text_table());
    eprintln!("report -> {}", args.report_path.display());
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    EvalReport::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn series_label(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string())
}

fn load_series(dir: &Path) -> Result<RunSeries, CliError> {
    RunSeries::load_dir(series_label(dir), dir).map_err(|e| CliError::Usage(e.to_string()))
}

fn summary_table(series: &RunSeries) -> Result<String, CliError> {
    let summary = stats::summarize(series).map_err(|e| CliError::Usage(e.to_string()))?;
    let width = summary.keys().map(String::len).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>6}  {:>4}", "metric", "Mean (%)", "StdDev", "runs");
    for (name, s) in &summary {
        let _ = writeln!(out, "{name:<width$}  {:>8.2}  {:>6.2}  {:>4}", s.mean * 100.0, s.stddev * 100.0, s.runs);
    }
    Ok(out)
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    if let Some(dir) = &args.series {
        let series = load_series(dir)?;
        print!("series {}\n{}", series.label, summary_table(&series)?);
        return Ok(());
    }
    if args.reports.is_empty() {
        return Err(CliError::Usage("give report files or --series <dir>".into()));
    }
    for (i, path) in args.reports.iter().enumerate() {
        let report = read_report(path)?;
        if i > 0 {
            println!();
        }
        if !report.metadata.label.is_empty() {
            println!("{} [{}]", path.display(), report.metadata.label);
        } else {
            println!("{}", path.display());
        }
        print!("{}", report.to_text_table());
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default)]
    ablation: Vec<AblationSpec>,
}

fn fill<T: Clone>(own: &mut Vec<T>, cli: &[T]) {
    if own.is_empty() {
        *own = cli.to_vec();
    }
}

fn ablation_plan(args: &AblateArgs) -> Result<Vec<AblationSpec>, CliError> {
    let mut specs = Vec::new();
    if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let file: SpecFile = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        specs.extend(file.ablation);
    }
    if args.grid {
        specs.extend(AblationSpec::modality_grid());
    }
    if specs.is_empty() {
        specs.push(AblationSpec::default());
    }
    // command-line sweeps fill any sweep a spec leaves empty
    for spec in &mut specs {
        fill(&mut spec.lambda, &args.sweep_lambda);
        fill(&mut spec.z, &args.sweep_z);
        fill(&mut spec.k_prime, &args.sweep_k_prime);
        fill(&mut spec.n_questions, &args.sweep_n_questions);
    }
    if args.compare_fusion {
        let summed: Vec<_> = specs.iter().filter(|s| !s.fusion_sum).map(|s| AblationSpec { fusion_sum: true, ..s.clone() }).collect();
        specs.extend(summed);
    }
    Ok(specs)
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

fn significance(args: &AblateArgs, dir: &Path) -> Result<(), CliError> {
    let ours = load_series(dir)?;
    if args.baseline.is_empty() {
        print!("series {}\n{}", ours.label, summary_table(&ours)?);
        return Ok(());
    }
    let baselines = args.baseline.iter().map(|d| load_series(d)).collect::<Result<Vec<_>, _>>()?;
    let metric = match &args.metric {
        Some(m) => m.clone(),
        None => ours.metric_names().into_iter().next().ok_or_else(|| CliError::Usage(format!("{} has no metrics", dir.display())))?,
    };
    print!("{}", stats::significance_table(&ours, &baselines, &metric).map_err(|e| CliError::Usage(e.to_string()))?);
    for base in &baselines {
        let sig = stats::compare_metric(&ours, base, &metric).map_err(|e| CliError::Usage(e.to_string()))?;
        let verdict = match sig.verdict {
            stats::Verdict::Reject => "reject H0",
            stats::Verdict::NoEvidence => "no evidence",
        };
        println!("{} vs {}: {verdict}{}", ours.label, base.label, if sig.notes.is_empty() { String::new() } else { format!(" ({})", sig.notes.join("; ")) });
    }
    Ok(())
}

pub fn ablate_cmd(args: &AblateArgs, matches: &ArgMatches) -> Result<(), CliError> {
    if let Some(dir) = &args.series {
        return significance(args, dir);
    }
    let (Some(manifest_path), Some(catalog_path)) = (&args.manifest, &args.catalog) else {
        return Err(CliError::Usage("ablation runs need --manifest and --catalog (or --series for significance tests)".into()));
    };
    let Settings { config, options } = resolve(&args.config, matches)?;
    let specs = ablation_plan(args)?;
    let agents = agents(&args.backend, &config)?;
    let manifest = load_manifest_rooted(manifest_path, args.backend.image_root.as_deref())?;
    let catalog = catalog_for(&manifest, catalog_path, &agents, options.exec)?;
    let runs = ablate(&manifest, &catalog, &agents, &config, &options, &specs).map_err(pipeline_err)?;

    let metric_names: Vec<String> = runs.first().map(|r| r.run.report.metrics.keys().cloned().collect()).unwrap_or_default();
    let width = runs.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let mut table = String::new();
    let _ = write!(table, "{:<width$}", "run");
    for m in &metric_names {
        let _ = write!(table, "  {m:>9}");
    }
    table.push('\n');
    for (i, r) in runs.iter().enumerate() {
        let path: PathBuf = args.out.join(format!("{i:02}-{}.json", file_stem(&r.label)));
        write_file(&path, &r.run.report.to_json())?;
        let _ = write!(table, "{:<width$}", r.label);
        for m in &metric_names {
            let _ = write!(table, "  {:>9.2}", r.run.report.metrics.get(m).copied().unwrap_or(f64::NAN) * 100.0);
        }
        table.push('\n');
    }
    print!("{table}");
    eprintln!("{} ablation report(s) -> {}", runs.len(), args.out.display());
    Ok(())
}

fn trace_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let dir = if path.join(TRACES_DIR).is_dir() { path.join(TRACES_DIR) } else { path.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ldjson"))
        .collect();
    files.sort();
    Ok(files)
}

fn keep(record: &TraceRecord, stage: Option<StageArg>) -> bool {
    matches!(
        (stage, record),
        (None, _)
            | (Some(StageArg::Query), TraceRecord::Query { .. })
            | (Some(StageArg::Coarse), TraceRecord::Coarse(_))
            | (Some(StageArg::Fine), TraceRecord::Fine(_))
    )
}

pub fn trace_dump(args: &TraceDumpArgs) -> Result<(), CliError> {
    let mut out = String::new();
    for file in trace_files(&args.path)? {
        let records = read_trace(&file).map_err(|e| CliError::Usage(e.to_string()))?;
        for record in records.iter().filter(|r| keep(r, args.stage)) {
            if !args.table {
                let line = serde_json::to_string(record).map_err(|e| runtime("encoding record")(&e))?;
                out.push_str(&line);
                out.push('\n');
                continue;
            }
            match record {
                TraceRecord::Query { query_id, .. } => {
                    let _ = writeln!(out, "# {query_id}");
                }
                TraceRecord::Coarse(c) => {
                    let _ = writeln!(
                        out,
                        "coarse {:<16} s_t {:>8.4} s_v {:>8.4} rank_t {:>5} rank_v {:>5} rrf {:.6}",
                        c.id, c.s_t, c.s_v, c.rank_t, c.rank_v, c.rrf
                    );
                }
                TraceRecord::Fine(f) => {
                    let _ = writeln!(
                        out,
                        "fine   {:<16} q_t {:>3} q_v {:>3} sim {:>8.4} norm {:>6.4} final {:.4}",
                        f.id, f.s_q_text, f.s_q_vision, f.fused_sim, f.norm_sim, f.final_score
                    );
                }
            }
        }
    }
    print!("{out}");
    Ok(())
}
